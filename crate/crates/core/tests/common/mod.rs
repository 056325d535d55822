//! Brute-force oracles. Nothing here calls into the production algorithms;
//! only the core data types are shared.
#![allow(dead_code, clippy::needless_range_loop)]

use vidcurate::frame_io::Frame;

/// Integer luma of one pixel.
pub fn oracle_luma(frame: &Frame, x: usize, y: usize) -> u8 {
    let c = frame.channels as usize;
    let i = (y * frame.width as usize + x) * c;
    if c == 1 {
        return frame.pixels[i];
    }
    let (r, g, b) = (
        u32::from(frame.pixels[i]),
        u32::from(frame.pixels[i + 1]),
        u32::from(frame.pixels[i + 2]),
    );
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

fn luma_grid(frame: &Frame) -> Vec<Vec<u8>> {
    (0..frame.height as usize)
        .map(|y| (0..frame.width as usize).map(|x| oracle_luma(frame, x, y)).collect())
        .collect()
}

type Grid = Vec<Vec<u8>>;

/// 3x3 window with replicated borders: every neighbour coordinate is
/// clamped into the image, pixel by pixel.
fn window(m: &Grid, erode: bool) -> Grid {
    let h = m.len() as i64;
    let w = m[0].len() as i64;
    let mut out = vec![vec![0u8; w as usize]; h as usize];
    for y in 0..h {
        for x in 0..w {
            let mut v = if erode { 1 } else { 0 };
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let yy = (y + dy).clamp(0, h - 1) as usize;
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    let p = m[yy][xx];
                    if erode && p == 0 {
                        v = 0;
                    }
                    if !erode && p == 1 {
                        v = 1;
                    }
                }
            }
            out[y as usize][x as usize] = v;
        }
    }
    out
}

pub fn oracle_pair_score(a: &Frame, b: &Frame, threshold: u8) -> f64 {
    let (ga, gb) = (luma_grid(a), luma_grid(b));
    let mut mask: Grid = vec![vec![0; a.width as usize]; a.height as usize];
    for y in 0..a.height as usize {
        for x in 0..a.width as usize {
            let d = (i32::from(ga[y][x]) - i32::from(gb[y][x])).abs();
            if d > i32::from(threshold) {
                mask[y][x] = 1;
            }
        }
    }
    let opened = window(&window(&mask, true), false);
    let closed = window(&window(&opened, false), true);
    let mut ones = 0u64;
    for row in &closed {
        for &p in row {
            ones += u64::from(p);
        }
    }
    ones as f64 / (a.width as f64 * a.height as f64)
}

/// Per-pair scores and their mean, both from pixel loops.
pub fn oracle_motion_profile(frames: &[Frame], threshold: u8) -> (Vec<f64>, f64) {
    let mut scores = Vec::new();
    for k in 0..frames.len() - 1 {
        scores.push(oracle_pair_score(&frames[k], &frames[k + 1], threshold));
    }
    let mut total = 0.0;
    for s in &scores {
        total += s;
    }
    let avg = total / scores.len() as f64;
    (scores, avg)
}

/// Exhaustive similarity matrix followed by an explicit greedy walk over
/// clips sorted longest first, ties by id.
pub fn oracle_dedup(clips: &[(String, u32)], features: &[Vec<f64>], tau: f64) -> Vec<String> {
    let n = clips.len();
    let mut sim = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for k in 0..features[i].len() {
                dot += features[i][k] * features[j][k];
                na += features[i][k] * features[i][k];
                nb += features[j][k] * features[j][k];
            }
            sim[i][j] = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| clips[b].1.cmp(&clips[a].1).then_with(|| clips[a].0.cmp(&clips[b].0)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let mut duplicate = false;
        for &k in &kept {
            if sim[i][k] >= tau {
                duplicate = true;
            }
        }
        if !duplicate {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| clips[i].0.clone()).collect()
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Mean absolute luma difference for every consecutive pair, then the
/// suppression walk: a boundary becomes a cut when its difference exceeds
/// the threshold and at least `min_len` frames separate it from the last
/// accepted cut (or frame 0).
pub fn oracle_cuts(frames: &[Frame], threshold: f64, min_len: u32) -> Vec<u32> {
    let mut diffs = Vec::new();
    for k in 1..frames.len() {
        let (a, b) = (luma_grid(&frames[k - 1]), luma_grid(&frames[k]));
        let mut total = 0u64;
        for y in 0..a.len() {
            for x in 0..a[0].len() {
                total += u64::from(a[y][x].abs_diff(b[y][x]));
            }
        }
        let n = (a.len() * a[0].len()) as f64;
        diffs.push((k as u32, total as f64 / (n * 255.0)));
    }
    let mut cuts = Vec::new();
    let mut last = 0u32;
    for (k, d) in diffs {
        if d > threshold && k - last >= min_len {
            cuts.push(k);
            last = k;
        }
    }
    cuts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleReclip {
    Keep,
    Range(u32, u32),
    Static,
    TooShort,
}

/// Explicitly recursive re-clipping over `[lo, hi)` of a clip whose pair
/// scores are `scores` (pair `k` joins local frames `k` and `k + 1`).
pub fn oracle_reclip(scores: &[f64], static_t: f64, peak: f64, jump: f64, min_len: u32) -> OracleReclip {
    let avg = scores.iter().sum::<f64>() / scores.len() as f64;
    if avg < static_t {
        return OracleReclip::Static;
    }
    fn change(s: &[f64], peak: f64, jump: f64) -> Option<usize> {
        if s.len() < 3 {
            return None;
        }
        let mut best = 0;
        for i in 1..s.len() {
            if s[i] > s[best] {
                best = i;
            }
        }
        let left = if best == 0 { 0.0 } else { s[best - 1] };
        let right = if best + 1 < s.len() { s[best + 1] } else { 0.0 };
        if s[best] > peak && s[best] - left > jump && s[best] - right > jump {
            Some(best)
        } else {
            None
        }
    }
    fn go(s: &[f64], lo: u32, hi: u32, peak: f64, jump: f64, min_len: u32, changed: bool) -> OracleReclip {
        // s holds the pairs inside [lo, hi)
        match change(s, peak, jump) {
            None if changed => OracleReclip::Range(lo, hi),
            None => OracleReclip::Keep,
            Some(k) => {
                let cut = lo + k as u32 + 1;
                let (nlo, nhi, ns) = if cut - lo >= hi - cut {
                    (lo, cut, &s[..k])
                } else {
                    (cut, hi, &s[k + 1..])
                };
                if nhi - nlo < min_len {
                    OracleReclip::TooShort
                } else {
                    go(ns, nlo, nhi, peak, jump, min_len, true)
                }
            }
        }
    }
    go(scores, 0, scores.len() as u32 + 1, peak, jump, min_len, false)
}

/// 8x8 block means of the four keyframes, averaged and normalised.
pub fn oracle_block_features(frames: &[Frame]) -> Vec<f64> {
    let n = frames.len() as u32;
    let mut acc = vec![0.0f64; 64];
    for i in 0..4u32 {
        let idx = ((f64::from(i) * f64::from(n - 1) / 3.0) + 0.5).floor() as usize;
        let g = luma_grid(&frames[idx]);
        let (h, w) = (g.len(), g[0].len());
        for by in 0..8 {
            for bx in 0..8 {
                let y0 = (by * h / 8).min(h - 1);
                let y1 = ((by + 1) * h / 8).max(y0 + 1).min(h);
                let x0 = (bx * w / 8).min(w - 1);
                let x1 = ((bx + 1) * w / 8).max(x0 + 1).min(w);
                let mut sum = 0u64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += u64::from(g[y][x]);
                    }
                }
                acc[by * 8 + bx] += (sum as f64 / ((y1 - y0) * (x1 - x0)) as f64) / 4.0;
            }
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; 64];
        e[0] = 1.0;
        return e;
    }
    acc.into_iter().map(|v| v / norm).collect()
}
