use serde::{Deserialize, Serialize};

/// Least-squares line `y ~ a + b x`. `r2` is `None` when it is undefined:
/// fewer than two distinct abscissae or constant `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub a: f64,
    pub b: f64,
    pub r2: Option<f64>,
}

impl Fit {
    pub fn predict(&self, x: f64) -> f64 {
        self.a + self.b * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curve {
    Log,
    Linear,
    NLogN,
}

impl Curve {
    pub fn transform(self, n: f64) -> f64 {
        match self {
            Curve::Log => n.ln(),
            Curve::Linear => n,
            Curve::NLogN => n * n.ln(),
        }
    }
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Fit {
    assert_eq!(xs.len(), ys.len());
    if xs.is_empty() {
        return Fit {
            a: f64::NAN,
            b: f64::NAN,
            r2: None,
        };
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Fit {
            a: my,
            b: 0.0,
            r2: None,
        };
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a - b * x).powi(2))
        .sum();
    let r2 = (syy > 0.0).then(|| 1.0 - ss_res / syy);
    Fit { a, b, r2 }
}

/// Fits `T ~ a + b f(n)` for the given curve.
pub fn fit_curve(curve: Curve, ns: &[usize], ts: &[f64]) -> Fit {
    let xs: Vec<f64> = ns.iter().map(|&n| curve.transform(n as f64)).collect();
    fit_line(&xs, ts)
}

/// `true` when both r2 values exist and the first is larger.
pub fn better(first: &Fit, second: &Fit) -> bool {
    matches!((first.r2, second.r2), (Some(a), Some(b)) if a > b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_log_data() {
        let ns = [32, 64, 128, 256, 512];
        let ts: Vec<f64> = ns.iter().map(|&n| 5.0 + 3.0 * (n as f64).ln()).collect();
        let f = fit_curve(Curve::Log, &ns, &ts);
        assert!((f.a - 5.0).abs() < 1e-9 && (f.b - 3.0).abs() < 1e-9);
        assert!((f.r2.unwrap() - 1.0).abs() < 1e-12);
        let lin = fit_curve(Curve::Linear, &ns, &ts);
        assert!(better(&f, &lin));
    }

    #[test]
    fn degenerate_inputs() {
        let single = fit_curve(Curve::Linear, &[64], &[100.0]);
        assert_eq!(single.r2, None);
        assert_eq!(single.a, 100.0);
        let flat = fit_curve(Curve::Log, &[1, 2, 3], &[7.0, 7.0, 7.0]);
        assert_eq!(flat.r2, None);
        assert!(!better(&single, &flat));
        assert_eq!(fit_line(&[], &[]).r2, None);
    }

    proptest! {
        #[test]
        fn residuals_are_orthogonal(ys in prop::collection::vec(1.0f64..1e4, 5)) {
            let ns = [32usize, 64, 128, 256, 512];
            for curve in [Curve::Log, Curve::Linear, Curve::NLogN] {
                let f = fit_curve(curve, &ns, &ys);
                let xs: Vec<f64> = ns.iter().map(|&n| curve.transform(n as f64)).collect();
                let scale: f64 = xs.iter().zip(&ys).map(|(x, y)| (x * y).abs()).sum::<f64>() + 1.0;
                let r: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - f.predict(*x)).collect();
                prop_assert!(r.iter().sum::<f64>().abs() <= 1e-8 * scale);
                let rx: f64 = r.iter().zip(&xs).map(|(r, x)| r * x).sum();
                prop_assert!(rx.abs() <= 1e-8 * scale);
                if let Some(r2) = f.r2 {
                    prop_assert!(r2 <= 1.0 + 1e-12);
                }
            }
        }
    }
}
