//! Brute-force metric oracle, written without hash maps or DP tables:
//! n-grams are compared by linear scans, the LCS by plain recursion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

pub fn count(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

pub fn clipped(c: &[Vec<String>], r: &[Vec<String>]) -> usize {
    let mut seen: Vec<&Vec<String>> = Vec::new();
    let mut total = 0;
    for g in c {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        total += count(c, g).min(count(r, g));
    }
    total
}

pub fn oracle_bleu(c: &[Vec<String>], r: &[Vec<String>], n: usize) -> f64 {
    let cl: usize = c.iter().map(|x| x.len()).sum();
    let rl: usize = r.iter().map(|x| x.len()).sum();
    if cl == 0 {
        return if rl == 0 { 1.0 } else { 0.0 };
    }
    let mut logs = 0.0;
    for m in 1..=n {
        let mut hit = 0;
        let mut tot = 0;
        for (a, b) in c.iter().zip(r) {
            let (ga, gb) = (grams(a, m), grams(b, m));
            hit += clipped(&ga, &gb);
            tot += ga.len();
        }
        let p = match (hit, m) {
            (0, 1) => return 0.0,
            (0, _) => 1.0 / (tot as f64 + 1.0),
            _ => hit as f64 / tot as f64,
        };
        logs += p.ln();
    }
    let bp = if cl > rl { 1.0 } else { (1.0 - rl as f64 / cl as f64).exp() };
    bp * (logs / n as f64).exp()
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    match (a.split_first(), b.split_first()) {
        (Some((x, ra)), Some((y, rb))) => {
            if x == y {
                1 + lcs_len(ra, rb)
            } else {
                lcs_len(ra, b).max(lcs_len(a, rb))
            }
        }
        _ => 0,
    }
}

/// Positions of `u` matched against `inc`: walk both, match equal heads,
/// otherwise drop the head of `u` if that keeps the LCS length, else the
/// head of `inc`.
pub fn matched_in_u(inc: &[String], u: &[String]) -> Vec<bool> {
    let mut out = vec![false; u.len()];
    let (mut i, mut j) = (0, 0);
    while i < inc.len() && j < u.len() {
        if inc[i] == u[j] {
            out[j] = true;
            i += 1;
            j += 1;
        } else if lcs_len(&inc[i..], &u[j + 1..]) == lcs_len(&inc[i..], &u[j..]) {
            j += 1;
        } else {
            i += 1;
        }
    }
    out
}

pub fn restored_grams(u: &[String], inc: &[String], n: usize) -> Vec<Vec<String>> {
    let m = matched_in_u(inc, u);
    let mut out = Vec::new();
    let mut start = 0;
    while start < u.len() {
        if m[start] {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < u.len() && !m[end] {
            end += 1;
        }
        out.extend(grams(&u[start..end], n));
        start = end;
    }
    out
}

pub fn oracle_restoration(c: &[Vec<String>], r: &[Vec<String>], inc: &[Vec<String>], n: usize) -> (f64, f64, f64) {
    let (mut hit, mut ct, mut rt) = (0, 0, 0);
    for ((a, b), i) in c.iter().zip(r).zip(inc) {
        let (ga, gb) = (restored_grams(a, i, n), restored_grams(b, i, n));
        hit += clipped(&ga, &gb);
        ct += ga.len();
        rt += gb.len();
    }
    if ct == 0 && rt == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if ct == 0 { 0.0 } else { hit as f64 / ct as f64 };
    let rr = if rt == 0 { 0.0 } else { hit as f64 / rt as f64 };
    let f = if p + rr == 0.0 { 0.0 } else { 2.0 * p * rr / (p + rr) };
    (p, rr, f)
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (Vec<Vec<String>>, Vec<Vec<String>>, Vec<Vec<String>>) {
    let words = ["a", "b", "c", "d"];
    let seq = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.random_range(0..7);
        (0..len).map(|_| words[rng.random_range(0..words.len())].to_string()).collect()
    };
    let n = rng.random_range(1..5);
    let mut c = Vec::new();
    let mut r = Vec::new();
    let mut i = Vec::new();
    for _ in 0..n {
        c.push(seq(rng));
        r.push(seq(rng));
        i.push(seq(rng));
    }
    (c, r, i)
}
