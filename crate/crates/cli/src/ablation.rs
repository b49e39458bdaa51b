use serde::{Deserialize, Serialize};
use t1rho_inr::metrics::finite_or_tag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `ZF` for the zero-filled baseline, otherwise the training mode.
    pub method: String,
    #[serde(with = "finite_or_tag")]
    pub psnr: f64,
    #[serde(with = "finite_or_tag")]
    pub ssim: f64,
    #[serde(with = "finite_or_tag")]
    pub nrmse: f64,
    /// T1ρ map NRMSE inside the phantom support.
    #[serde(with = "finite_or_tag")]
    pub t1rho_nrmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub iters: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, method: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Fixed-width text rendering, one line per method.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "iterations {}  lambda1 {}  lambda2 {}\n{:<6} {:>10} {:>8} {:>8} {:>12}\n",
            self.iters, self.lambda1, self.lambda2, "method", "PSNR (dB)", "SSIM", "NRMSE", "T1rho NRMSE"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<6} {:>10.2} {:>8.4} {:>8.4} {:>12.4}\n",
                r.method, r.psnr, r.ssim, r.nrmse, r.t1rho_nrmse
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_table_is_aligned() {
        let row = |m: &str, p: f64| AblationRow {
            method: m.into(),
            psnr: p,
            ssim: 0.5,
            nrmse: 0.1,
            t1rho_nrmse: 0.2,
        };
        let t = AblationTable {
            iters: 10,
            lambda1: 1.0,
            lambda2: 2.0,
            rows: vec![row("ZF", 25.0), row("FULL", 31.256), row("DC", f64::INFINITY)],
        };
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        let width = lines[1].len();
        assert!(lines[2..].iter().all(|l| l.len() == width), "{text}");
        assert!(lines[3].contains("31.26"));
        let back: AblationTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
