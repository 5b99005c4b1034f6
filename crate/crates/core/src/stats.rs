//! Small descriptive statistics shared across modules.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Population standard deviation (n denominator).
pub fn population_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Total sum of squares around the mean.
pub fn total_ss(ys: &[f64]) -> f64 {
    let m = mean(ys);
    ys.iter().map(|y| (y - m).powi(2)).sum()
}

/// Coefficient of determination, `1 - SSE/SST`. NaN when `ys` is constant.
pub fn r_squared(ys: &[f64], yhat: &[f64]) -> f64 {
    let sst = total_ss(ys);
    if sst == 0.0 {
        return f64::NAN;
    }
    let sse: f64 = ys.iter().zip(yhat).map(|(y, p)| (y - p).powi(2)).sum();
    1.0 - sse / sst
}

pub fn mse(ys: &[f64], yhat: &[f64]) -> f64 {
    ys.iter().zip(yhat).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / ys.len() as f64
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Mean over the finite entries only.
pub fn finite_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .filter(|x| x.is_finite())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}
