//! Brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use msagsm::eval::{Detection, EventAnnotation, PeakConfig, PrPoint};
use msagsm::temporal::{attention_forward, gsm_forward, msgsm_forward, AttentionParams, ConvParams, MsgsmParams};
use msagsm::tensor::{Graph, Tensor, Var};

pub fn det(video: usize, frame: usize, class_id: usize, confidence: f64) -> Detection {
    Detection {
        video,
        frame,
        class_id,
        confidence,
    }
}

pub fn gt(video: usize, frame: usize, class_id: usize) -> EventAnnotation {
    EventAnnotation {
        video,
        frame,
        class_id,
    }
}

/// Plain nested-loop greedy matching; returns TP flags in rank order.
pub fn oracle_flags(dets: &[Detection], gts: &[EventAnnotation], class_id: usize, tol: usize) -> (Vec<bool>, usize) {
    let mut order: Vec<Detection> = dets.iter().filter(|d| d.class_id == class_id).copied().collect();
    // Selection sort by (confidence desc, video, frame).
    for i in 0..order.len() {
        let mut best = i;
        for j in i + 1..order.len() {
            let (a, b) = (&order[j], &order[best]);
            let better = a.confidence > b.confidence
                || (a.confidence == b.confidence && (a.video, a.frame) < (b.video, b.frame));
            if better {
                best = j;
            }
        }
        order.swap(i, best);
    }
    let pool: Vec<&EventAnnotation> = gts.iter().filter(|g| g.class_id == class_id).collect();
    let mut used = vec![false; pool.len()];
    let mut flags = Vec::new();
    for d in &order {
        let mut pick: Option<usize> = None;
        for (i, g) in pool.iter().enumerate() {
            if used[i] || g.video != d.video {
                continue;
            }
            let dist = (g.frame as i64 - d.frame as i64).unsigned_abs() as usize;
            if dist > tol {
                continue;
            }
            pick = match pick {
                None => Some(i),
                Some(p) => {
                    let pd = (pool[p].frame as i64 - d.frame as i64).unsigned_abs() as usize;
                    if dist < pd || (dist == pd && g.frame < pool[p].frame) {
                        Some(i)
                    } else {
                        Some(p)
                    }
                }
            };
        }
        if let Some(i) = pick {
            used[i] = true;
        }
        flags.push(pick.is_some());
    }
    (flags, pool.len())
}

/// AP re-evaluated from every prefix: sum over recall steps of the best
/// precision attained at any prefix with at least that recall.
pub fn oracle_ap(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let prefixes: Vec<(usize, usize)> = (1..=flags.len())
        .map(|k| (flags[..k].iter().filter(|&&f| f).count(), k))
        .collect();
    let max_tp = prefixes.last().map_or(0, |p| p.0);
    let mut ap = 0.0;
    for level in 1..=max_tp {
        let best = prefixes
            .iter()
            .filter(|(tp, _)| *tp >= level)
            .map(|&(tp, k)| tp as f64 / k as f64)
            .fold(0.0, f64::max);
        ap += best / num_gt as f64;
    }
    Some(ap)
}

pub fn oracle_map(dets: &[Detection], gts: &[EventAnnotation], tol: usize) -> Option<f64> {
    let mut classes: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return None;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (f, n) = oracle_flags(dets, gts, c, tol);
            oracle_ap(&f, n).unwrap()
        })
        .sum();
    Some(total / classes.len() as f64)
}

pub fn oracle_peaks(scores: &Tensor, cfg: &PeakConfig) -> Vec<(usize, usize)> {
    let (t, k) = (scores.shape()[0], scores.shape()[1]);
    let r = cfg.window / 2;
    let mut out = Vec::new();
    for c in 1..k {
        for f in 0..t {
            let s = scores.at(&[f, c]);
            if s <= cfg.threshold {
                continue;
            }
            let lo = f.saturating_sub(r);
            let hi = (f + r).min(t - 1);
            let ok = (lo..=hi).all(|u| {
                let v = scores.at(&[u, c]);
                if u < f {
                    v < s
                } else {
                    v <= s
                }
            });
            if ok {
                out.push((c, f));
            }
        }
    }
    out
}

pub fn oracle_density(events: &[usize], w: usize, t: usize) -> f64 {
    let starts = t - w + 1;
    let total: usize = (0..starts)
        .map(|s| events.iter().filter(|&&e| e >= s && e < s + w).count())
        .sum();
    total as f64 / starts as f64
}

pub fn curve_area(points: &[PrPoint]) -> f64 {
    let mut prev = 0.0;
    let mut area = 0.0;
    for p in points {
        area += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    area
}

/// Plain-loop gated shift branch: gates from a direct 3x3x3 correlation with
/// dilation `d`, tanh, gate the halves, shift them `-d` / `+d`, add residual.
pub fn branch_oracle(x: &Tensor, gate: &ConvParams, d: usize) -> Tensor {
    let s = x.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let mut gates = Tensor::zeros(&[2, t, h, w]);
    for o in 0..2 {
        for ti in 0..t {
            for hi in 0..h {
                for wi in 0..w {
                    let mut acc = gate.bias.data()[o];
                    for ci in 0..c {
                        for a in 0..3 {
                            for p in 0..3 {
                                for q in 0..3 {
                                    let tt = ti as isize + (a as isize - 1) * d as isize;
                                    let hh = hi as isize + p as isize - 1;
                                    let ww = wi as isize + q as isize - 1;
                                    if tt < 0 || hh < 0 || ww < 0 {
                                        continue;
                                    }
                                    let (tt, hh, ww) = (tt as usize, hh as usize, ww as usize);
                                    if tt >= t || hh >= h || ww >= w {
                                        continue;
                                    }
                                    acc += gate.weight.at(&[o, ci, a, p, q]) * x.at(&[ci, tt, hh, ww]);
                                }
                            }
                        }
                    }
                    gates.set(&[o, ti, hi, wi], acc.tanh());
                }
            }
        }
    }
    let mut out = x.clone();
    for ci in 0..c {
        let (dir, offset): (usize, isize) = if ci < c / 2 { (0, -(d as isize)) } else { (1, d as isize) };
        for ti in 0..t {
            let src = ti as isize - offset;
            if src < 0 || src >= t as isize {
                continue;
            }
            let src = src as usize;
            for hi in 0..h {
                for wi in 0..w {
                    let v = x.at(&[ci, src, hi, wi]) * gates.at(&[dir, src, hi, wi]);
                    out.set(&[ci, ti, hi, wi], out.at(&[ci, ti, hi, wi]) + v);
                }
            }
        }
    }
    out
}

pub fn eval_msgsm(x: &Tensor, params: &MsgsmParams, dilations: &[usize]) -> Tensor {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let p = constants(&mut g, params);
    let y = msgsm_forward(&mut g, xv, &p, dilations).unwrap();
    g.value(y).clone()
}

pub fn eval_gsm(x: &Tensor, gate: &ConvParams) -> Tensor {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let gv = gate.map(&mut |t| g.constant(t.clone()));
    let y = gsm_forward(&mut g, xv, &gv).unwrap();
    g.value(y).clone()
}

pub fn eval_attention(x: &Tensor, attn: &AttentionParams) -> Tensor {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let av = attn.map(&mut |t| g.constant(t.clone()));
    let y = attention_forward(&mut g, xv, &av).unwrap();
    g.value(y).clone()
}

pub fn constants(g: &mut Graph, p: &MsgsmParams) -> MsgsmParams<Var> {
    p.map(&mut |t| g.constant(t.clone()))
}
