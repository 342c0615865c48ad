//! Straight-line re-implementation of the encoder and both losses, used to
//! check the library's dump. It reads the checkpoint bytes, vocabulary and
//! corpus files itself and shares no code with the crate.

#![allow(dead_code)]

use std::collections::HashMap;

pub struct Net {
    pub vocab: usize,
    pub dim_w: usize,
    pub dim: usize,
    pub width: usize,
    pub linear: bool,
    pub arrays: HashMap<String, Vec<f64>>,
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> &'a [u8] {
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    s
}

fn u32_at(bytes: &[u8], pos: &mut usize) -> u32 {
    u32::from_le_bytes(take(bytes, pos, 4).try_into().unwrap())
}

pub fn parse_checkpoint(bytes: &[u8]) -> Net {
    assert_eq!(&bytes[..4], b"SDOC");
    assert_eq!(bytes[4], 1);
    let mut pos = 5;
    let vocab = u32_at(bytes, &mut pos) as usize;
    let dim_w = u32_at(bytes, &mut pos) as usize;
    let dim = u32_at(bytes, &mut pos) as usize;
    let mut arrays = HashMap::new();
    loop {
        let name_len = u16::from_le_bytes(take(bytes, &mut pos, 2).try_into().unwrap()) as usize;
        if name_len == 0 {
            break;
        }
        let name = String::from_utf8(take(bytes, &mut pos, name_len).to_vec()).unwrap();
        let count = u64::from_le_bytes(take(bytes, &mut pos, 8).try_into().unwrap()) as usize;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let f = f32::from_le_bytes(take(bytes, &mut pos, 4).try_into().unwrap());
            values.push(f as f64);
        }
        arrays.insert(name, values);
    }
    let meta = arrays["meta.arch"].clone();
    Net {
        vocab,
        dim_w,
        dim,
        width: meta[0] as usize,
        linear: meta[2] != 0.0,
        arrays,
    }
}

/// `token<TAB>count` lines; ids start at 2 after PAD and UNK.
pub fn parse_vocab(text: &str) -> HashMap<String, u32> {
    text.lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| (l.split('\t').next().unwrap().to_string(), i as u32 + 2))
        .collect()
}

/// Corpus lines of lowercase words with `.` ending each sentence.
pub fn parse_corpus(text: &str, vocab: &HashMap<String, u32>) -> Vec<(String, Vec<Vec<u32>>)> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (id, body) = l.split_once('\t').unwrap();
            let sentences = body
                .split('.')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.split_whitespace().map(|w| *vocab.get(w).unwrap_or(&1)).collect())
                .collect();
            (id.to_string(), sentences)
        })
        .collect()
}

impl Net {
    fn conv(&self, x: &[Vec<f64>], w: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
        let c_out = b.len();
        let c_in = x[0].len();
        let mut out = Vec::new();
        for t in 0..x.len() + 1 - self.width {
            let mut row = Vec::new();
            for o in 0..c_out {
                let mut s = b[o];
                for j in 0..self.width {
                    for c in 0..c_in {
                        s += w[(o * self.width + j) * c_in + c] * x[t + j][c];
                    }
                }
                if !self.linear && s < 0.0 {
                    s = 0.0;
                }
                row.push(s);
            }
            out.push(row);
        }
        out
    }

    fn dense(x: &[f64], w: &[f64], b: &[f64], relu: bool) -> Vec<f64> {
        let mut out = Vec::new();
        for o in 0..b.len() {
            let mut s = b[o];
            for i in 0..x.len() {
                s += w[o * x.len() + i] * x[i];
            }
            out.push(if relu && s < 0.0 { 0.0 } else { s });
        }
        out
    }

    fn pool(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..x.len() / 2)
            .map(|i| {
                x[2 * i]
                    .iter()
                    .zip(&x[2 * i + 1])
                    .map(|(a, b)| if b > a { *b } else { *a })
                    .collect()
            })
            .collect()
    }

    /// Sentence vector from the `cntx` or `cdd` encoder, dropout off.
    pub fn encode(&self, which: &str, ids: &[u32]) -> Vec<f64> {
        let grow = self.width - 1;
        let min_len = ((2 + 2 * grow) * 2) + 2 * grow;
        let mut padded = ids.to_vec();
        while padded.len() < min_len {
            padded.push(0);
        }
        let emb = &self.arrays["embedding"];
        let mut x: Vec<Vec<f64>> = padded
            .iter()
            .map(|&id| emb[id as usize * self.dim_w..(id as usize + 1) * self.dim_w].to_vec())
            .collect();
        for layer in 1..=4 {
            let w = &self.arrays[&format!("{which}.conv{layer}.w")];
            let b = &self.arrays[&format!("{which}.conv{layer}.b")];
            x = self.conv(&x, w, b);
            if layer % 2 == 0 {
                x = Self::pool(&x);
            }
        }
        let mut avg = vec![0.0; x[0].len()];
        for row in &x {
            for (a, v) in avg.iter_mut().zip(row) {
                *a += v;
            }
        }
        for a in avg.iter_mut() {
            *a /= x.len() as f64;
        }
        let h = Self::dense(
            &avg,
            &self.arrays[&format!("{which}.fc1.w")],
            &self.arrays[&format!("{which}.fc1.b")],
            true,
        );
        Self::dense(
            &h,
            &self.arrays[&format!("{which}.fc2.w")],
            &self.arrays[&format!("{which}.fc2.b")],
            false,
        )
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn mean(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, x) in m.iter_mut().zip(v) {
            *a += x;
        }
    }
    m.iter().map(|a| a / vs.len() as f64).collect()
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn ns_loss(target: f64, negatives: &[f64], literal: bool) -> f64 {
    let mut loss = softplus(-target);
    for &n in negatives {
        loss += if literal { -softplus(-n) } else { softplus(n) };
    }
    loss
}

/// Parsed `key<TAB>value` dump.
pub struct Dump(pub HashMap<String, String>);

impl Dump {
    pub fn parse(text: &str) -> Dump {
        Dump(
            text.lines()
                .map(|l| {
                    let (k, v) = l.split_once('\t').unwrap();
                    (k.to_string(), v.to_string())
                })
                .collect(),
        )
    }

    pub fn get(&self, key: &str) -> &str {
        self.0.get(key).unwrap_or_else(|| panic!("dump lacks {key}"))
    }

    pub fn float(&self, key: &str) -> f64 {
        self.get(key).parse().unwrap()
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        self.get(key).split(' ').map(|x| x.parse().unwrap()).collect()
    }

    /// `D:S` references.
    pub fn refs(&self, key: &str) -> Vec<(usize, usize)> {
        self.get(key)
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let (d, t) = s.split_once(':').unwrap();
                (d.parse().unwrap(), t.parse().unwrap())
            })
            .collect()
    }
}

/// Recomputes every logit and loss in `dump` and returns the largest
/// absolute difference, with the name of the worst quantity.
pub fn compare(net: &Net, docs: &[(String, Vec<Vec<u32>>)], dump: &Dump) -> (f64, String) {
    let doc = dump.get("doc_index").parse::<usize>().unwrap();
    assert_eq!(docs[doc].0, dump.get("doc_id"));
    let k: usize = dump.get("k").parse().unwrap();
    let alpha = dump.float("alpha");
    let literal = dump.get("loss_form") == "literal";
    let sentences = &docs[doc].1;
    let n = sentences.len();
    let mut worst = (0.0f64, String::new());
    let mut check = |name: String, mine: f64, theirs: f64| {
        let diff = (mine - theirs).abs();
        if diff > worst.0 || diff.is_nan() {
            worst = (diff, name);
        }
    };
    for (s, ids) in sentences.iter().enumerate() {
        let listed: Vec<u32> = dump
            .get(&format!("sentence.{doc}:{s}"))
            .split(' ')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(&listed, ids, "sentence {s} token ids");
    }
    let cntx: Vec<Vec<f64>> = sentences.iter().map(|s| net.encode("cntx", s)).collect();
    let cdd = |d: usize, s: usize| net.encode("cdd", &docs[d].1[s]);

    let mut l_cntx = None;
    if n > 2 * k {
        let mut total = 0.0;
        for t in k..n - k {
            let around: Vec<usize> = (t - k..=t + k).filter(|&i| i != t).collect();
            let listed: Vec<usize> = dump
                .get(&format!("cntx.{t}.context"))
                .split(' ')
                .map(|x| x.parse().unwrap())
                .collect();
            assert_eq!(listed, around);
            let v = mean(&around.iter().map(|&i| cntx[i].clone()).collect::<Vec<_>>());
            let l_t = dot(&v, &cdd(doc, t));
            check(format!("cntx.{t}.l_t"), l_t, dump.float(&format!("cntx.{t}.l_t")));
            let theirs = dump.floats(&format!("cntx.{t}.l_neg"));
            let negs: Vec<f64> = dump
                .refs(&format!("cntx.{t}.negatives"))
                .iter()
                .map(|&(d, s)| {
                    assert_ne!(d, doc);
                    dot(&v, &cdd(d, s))
                })
                .collect();
            for (i, (a, b)) in negs.iter().zip(&theirs).enumerate() {
                check(format!("cntx.{t}.l_neg.{i}"), *a, *b);
            }
            let loss = ns_loss(l_t, &negs, literal);
            check(format!("cntx.{t}.loss"), loss, dump.float(&format!("cntx.{t}.loss")));
            total += loss;
        }
        let l = total / (n - 2 * k) as f64;
        check("L_cntx".into(), l, dump.float("L_cntx"));
        l_cntx = Some(l);
    }

    let raw = mean(&cntx);
    let target_norm = cntx.iter().map(|v| norm(v)).sum::<f64>() / n as f64;
    let scale = target_norm / norm(&raw);
    let v: Vec<f64> = raw.iter().map(|x| x * scale).collect();
    for (i, (a, b)) in v.iter().zip(dump.floats("doc.v_cntx")).enumerate() {
        check(format!("doc.v_cntx.{i}"), *a, b);
    }
    let mut total = 0.0;
    for t in 0..n {
        let l_t = dot(&v, &cdd(doc, t));
        check(format!("doc.{t}.l_t"), l_t, dump.float(&format!("doc.{t}.l_t")));
        let theirs = dump.floats(&format!("doc.{t}.l_neg"));
        let negs: Vec<f64> = dump
            .refs(&format!("doc.{t}.negatives"))
            .iter()
            .map(|&(d, s)| dot(&v, &cdd(d, s)))
            .collect();
        for (i, (a, b)) in negs.iter().zip(&theirs).enumerate() {
            check(format!("doc.{t}.l_neg.{i}"), *a, *b);
        }
        let loss = ns_loss(l_t, &negs, literal);
        check(format!("doc.{t}.loss"), loss, dump.float(&format!("doc.{t}.loss")));
        total += loss;
    }
    let l_doc = total / n as f64;
    check("L_doc".into(), l_doc, dump.float("L_doc"));
    let l_total = match l_cntx {
        Some(c) => alpha * c + (1.0 - alpha) * l_doc,
        None => l_doc,
    };
    check("L_total".into(), l_total, dump.float("L_total"));
    worst
}
