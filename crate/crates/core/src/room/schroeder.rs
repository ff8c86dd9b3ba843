use crate::dsp::SAMPLE_RATE;

/// Backward-integrated energy decay curve in dB relative to total energy.
pub fn energy_decay_db(h: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let total = acc;
    edc.iter()
        .map(|&e| if total > 0.0 && e > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// T60 extrapolated from a least-squares line through the −5 dB to −25 dB
/// span of the decay curve. `None` if the curve never reaches −25 dB.
pub fn schroeder_t60(h: &[f64]) -> Option<f64> {
    let db = energy_decay_db(h);
    let start = db.iter().position(|&v| v <= -5.0)?;
    let end = db.iter().position(|&v| v <= -25.0)?;
    if end <= start + 1 {
        return None;
    }
    let fs = SAMPLE_RATE as f64;
    let n = (end - start + 1) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in db.iter().enumerate().take(end + 1).skip(start) {
        let t = i as f64 / fs;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    (slope < 0.0).then(|| -60.0 / slope)
}
