//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use rand::Rng;
use wordshap::align::{decompose, TranscriptMap};
use wordshap::emissions::EmissionMatrix;
use wordshap::refine::{RefineConfig, SpectralFeatures};
use wordshap::TimeSpan;

/// Token ids the CTC path must emit for `tm`, with the word delimiter
/// between words when the vocabulary has one.
pub fn target_tokens(em: &EmissionMatrix, tm: &TranscriptMap) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, c) in tm.chars().iter().enumerate() {
        if k > 0 && tm.chars()[k - 1].word_index != c.word_index {
            if let Some(d) = em.word_delim_index() {
                out.push(d);
            }
        }
        out.push(c.vocab_index);
    }
    out
}

/// Best score over every token sequence of length `T` that collapses to
/// `target`, found by exhaustive enumeration of all `V^T` sequences.
pub fn brute_force_ctc(em: &EmissionMatrix, target: &[usize]) -> Option<f64> {
    let (t_len, v) = (em.frames(), em.vocab_size());
    let blank = em.blank_index();
    let mut seq = vec![0usize; t_len];
    let mut best: Option<f64> = None;
    loop {
        let mut collapsed = Vec::with_capacity(t_len);
        let mut last = None;
        for &tok in &seq {
            if Some(tok) != last && tok != blank {
                collapsed.push(tok);
            }
            last = Some(tok);
        }
        if collapsed == target {
            let mut score = 0.0f64;
            for (t, &tok) in seq.iter().enumerate() {
                score += em.get(t, tok) as f64;
            }
            if best.is_none_or(|b| score > b) {
                best = Some(score);
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t_len {
                return best;
            }
            seq[pos] += 1;
            if seq[pos] < v {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

/// A random alignment instance with `T <= 8`, `V <= 4` and at most three
/// target labels. Probabilities are sometimes drawn from a coarse grid so
/// that ties occur.
pub fn random_ctc_instance<R: Rng>(rng: &mut R) -> (EmissionMatrix, TranscriptMap) {
    loop {
        let v = rng.gen_range(2..=4usize);
        let with_delim = v >= 3 && rng.gen_bool(0.5);
        let mut vocab = vec!["<blank>".to_string()];
        if with_delim {
            vocab.push("|".into());
        }
        let letters = ["a", "b", "c"];
        while vocab.len() < v {
            vocab.push(letters[vocab.len() - 1 - with_delim as usize].into());
        }
        let alphabet: Vec<&str> = vocab[1 + with_delim as usize..].iter().map(String::as_str).collect();
        let n_chars = rng.gen_range(1..=3usize);
        let mut transcript = String::new();
        for k in 0..n_chars {
            if k > 0 && rng.gen_bool(0.4) {
                transcript.push(' ');
            }
            transcript.push_str(alphabet[rng.gen_range(0..alphabet.len())]);
        }
        let frames = rng.gen_range(1..=8usize);
        let coarse = rng.gen_bool(0.3);
        let mut log_probs = Vec::with_capacity(frames * v);
        for _ in 0..frames {
            let raw: Vec<f64> = (0..v)
                .map(|_| if coarse { rng.gen_range(1..=3) as f64 } else { rng.gen_range(0.01..1.0) })
                .collect();
            let total: f64 = raw.iter().sum();
            log_probs.extend(raw.iter().map(|p| (p / total).ln() as f32));
        }
        let em = EmissionMatrix::new(log_probs, frames, vocab.clone()).unwrap();
        let tm = decompose(&transcript, &vocab).unwrap();
        if target_tokens(&em, &tm).len() <= 3 {
            return (em, tm);
        }
    }
}

/// Shapley values as the average marginal contribution over all `n!`
/// orderings.
pub fn permutation_shapley(n: usize, v: impl Fn(u64) -> f64) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut totals = vec![0.0; n];
    let mut count = 0u64;
    permute(&mut perm, 0, &mut |p| {
        let mut mask = 0u64;
        for &i in p {
            let before = v(mask);
            mask |= 1 << i;
            totals[i] += v(mask) - before;
        }
        count += 1;
    });
    totals.into_iter().map(|t| t / count as f64).collect()
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Frame minimizing `alpha*E + beta*SF` among frames centered in
/// `[t_est - delta, t_est + delta]` intersected with `clamp`, scanning every
/// frame. Ties: nearest to `t_est`, then lowest index.
pub fn brute_refine(t_est: f64, feats: &SpectralFeatures, cfg: &RefineConfig, clamp: TimeSpan) -> f64 {
    let lo = (t_est - cfg.delta_s).max(clamp.start_s());
    let hi = (t_est + cfg.delta_s).min(clamp.end_s());
    let mut best: Option<(f64, f64, usize)> = None;
    for (n, &t) in feats.frame_times_s.iter().enumerate() {
        if t < lo || t > hi {
            continue;
        }
        let obj = cfg.alpha * feats.rms_energy[n] + cfg.beta * feats.spectral_flux[n];
        let key = (obj, (t - t_est).abs(), n);
        let better = match best {
            None => true,
            Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1 < b.1 || (key.1 == b.1 && key.2 < b.2))),
        };
        if better {
            best = Some(key);
        }
    }
    best.map_or(t_est, |(_, _, n)| feats.frame_times_s[n])
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Textbook paired t-test: `(t, p, d)`.
pub fn textbook_paired(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let t = mean / (var.sqrt() / n.sqrt());
    (t, t_two_sided_p(t, n - 1.0), mean / var.sqrt())
}

/// Standard normal draws by Box-Muller.
pub fn normals<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

/// `sum |a - b| / sum |b|`.
pub fn relative_l1(estimate: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = estimate.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = exact.iter().map(|b| b.abs()).sum();
    num / den
}

/// A game whose value table is indexed by coalition bits.
pub fn table_game(n: usize, table: Vec<f64>) -> wordshap::CoalitionGame {
    let ev = wordshap::evaluator::FnEvaluator(move |c: wordshap::Coalition| table[c.bits() as usize]);
    wordshap::CoalitionGame::new(n, ev).unwrap()
}

/// Values uniform in `[0, 1]` for every coalition.
pub fn uniform_table<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..1usize << n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Makes `player` null: every coalition takes the value it has without them.
pub fn with_null_player(table: &mut [f64], player: usize) {
    for bits in 0..table.len() {
        if bits & (1 << player) != 0 {
            table[bits] = table[bits & !(1 << player)];
        }
    }
}

/// Makes players `p` and `q` interchangeable by symmetrizing the table.
pub fn with_symmetric_pair(table: &mut [f64], p: usize, q: usize) {
    let swap = |b: usize| {
        let (bp, bq) = ((b >> p) & 1, (b >> q) & 1);
        (b & !(1 << p) & !(1 << q)) | (bq << p) | (bp << q)
    };
    let orig = table.to_vec();
    for (b, v) in table.iter_mut().enumerate() {
        *v = 0.5 * (orig[b] + orig[swap(b)]);
    }
}

/// A random waveform (8 kHz, up to half a second) with a random ordered
/// segmentation of 1 to 10 players and a random coalition over them.
pub fn random_masking_case<R: Rng>(
    rng: &mut R,
) -> (wordshap::Waveform, wordshap::Segmentation, wordshap::Coalition) {
    let len = rng.gen_range(100..4000usize);
    let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let w = wordshap::Waveform::new(samples, 8000).unwrap();
    let duration = w.duration_seconds();
    let n = rng.gen_range(1..=10usize);
    let mut cuts: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..duration)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut words = Vec::new();
    for (i, pair) in cuts.chunks(2).enumerate() {
        // abut the previous span now and then
        let start = if i > 0 && rng.gen_bool(0.3) { words.last().map_or(pair[0], |w: &wordshap::WordSegment| w.span.end_s()) } else { pair[0] };
        if pair[1] > start {
            words.push(wordshap::WordSegment {
                text: format!("w{i}"),
                span: TimeSpan::new(start, pair[1]).unwrap(),
                chars: Vec::new(),
            });
        }
    }
    if words.is_empty() {
        words.push(wordshap::WordSegment {
            text: "w".into(),
            span: TimeSpan::new(0.0, duration).unwrap(),
            chars: Vec::new(),
        });
    }
    let seg = wordshap::Segmentation::new(words, duration).unwrap();
    let coalition = wordshap::Coalition::from_bits(rng.gen_range(0..1u64 << seg.len()), seg.len()).unwrap();
    (w, seg, coalition)
}
