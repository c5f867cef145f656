//! Flat key-value run configuration.
//!
//! The format is one `key = value` pair per line, `#` comments, no nesting,
//! so any language's parser stays a screenful. `f_mode` and `g_mode` repeat
//! to build explicit forcing mode lists. Unknown keys are rejected.

use anyhow::{anyhow, bail, Context, Result};
use lowmach_core::fields::FluidParams;
use lowmach_core::spectral::Grid;
use lowmach_core::Complex64;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// An explicit forcing mode: wavenumber plus one complex coefficient per
/// velocity component.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ModeEntry {
    pub k1: i64,
    pub k2: i64,
    pub fx: (f64, f64),
    pub fy: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum ForcingSpec {
    TaylorGreen { amplitude: f64 },
    Kolmogorov { amplitude: f64, k: i64 },
    Modes { f_modes: Vec<ModeEntry>, g_modes: Vec<ModeEntry> },
}

/// Everything a run needs; defaults match the desk-scale ladder experiment.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub dim: usize,
    pub dealias: (u32, u32),
    pub mu: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub forcing: ForcingSpec,
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub omega: f64,
    pub delta: f64,
    pub a0: f64,
    pub e_gate: f64,
    pub eps0: f64,
    pub seed: u64,
    pub workers: usize,
    pub trials: usize,
    pub mms_case: String,
    pub csv_timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 32,
            dim: 2,
            dealias: (2, 3),
            mu: 1.0,
            lambda: 0.0,
            kappa: 1.0,
            eps: 0.05,
            eps_list: vec![0.1, 0.05, 0.025, 0.0125],
            forcing: ForcingSpec::TaylorGreen { amplitude: 1.0 },
            tol: 1e-10,
            max_outer: 80,
            max_inner: 600,
            omega: 1.0,
            delta: 0.0,
            a0: 0.5,
            e_gate: 0.5,
            eps0: 0.25,
            seed: 1234,
            workers: 1,
            trials: 50,
            mms_case: "taylor_green".into(),
            csv_timings: false,
        }
    }
}

fn parse_fraction(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s.split_once('/').ok_or_else(|| anyhow!("expected a fraction like 2/3"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_mode(s: &str) -> Result<ModeEntry> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("{e}: `{t}`")))
        .collect::<Result<_>>()?;
    if parts.len() != 6 {
        bail!("mode entries need 6 comma-separated numbers: k1,k2,re_x,im_x,re_y,im_y");
    }
    if parts[0].fract() != 0.0 || parts[1].fract() != 0.0 {
        bail!("mode wavenumbers must be integers");
    }
    Ok(ModeEntry {
        k1: parts[0] as i64,
        k2: parts[1] as i64,
        fx: (parts[2], parts[3]),
        fy: (parts[4], parts[5]),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut forcing_name: Option<String> = None;
        let mut amplitude = 1.0f64;
        let mut forcing_k = 1i64;
        let mut f_modes = Vec::new();
        let mut g_modes = Vec::new();
        let mut seen = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let ctx = || format!("config key `{key}` (line {})", lineno + 1);

            if key != "f_mode" && key != "g_mode" {
                if seen.insert(key.to_string(), ()).is_some() {
                    bail!("duplicate config key `{key}` (line {})", lineno + 1);
                }
            }
            match key {
                "n" => cfg.n = value.parse().with_context(ctx)?,
                "dim" => cfg.dim = value.parse().with_context(ctx)?,
                "dealias" => cfg.dealias = parse_fraction(value).with_context(ctx)?,
                "mu" => cfg.mu = value.parse().with_context(ctx)?,
                "lambda" => cfg.lambda = value.parse().with_context(ctx)?,
                "kappa" => cfg.kappa = value.parse().with_context(ctx)?,
                "eps" => cfg.eps = value.parse().with_context(ctx)?,
                "eps_list" => {
                    cfg.eps_list = value
                        .split(',')
                        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
                        .collect::<Result<_>>()
                        .with_context(ctx)?
                }
                "forcing" => forcing_name = Some(value.to_string()),
                "amplitude" => amplitude = value.parse().with_context(ctx)?,
                "forcing_k" => forcing_k = value.parse().with_context(ctx)?,
                "f_mode" => f_modes.push(parse_mode(value).with_context(ctx)?),
                "g_mode" => g_modes.push(parse_mode(value).with_context(ctx)?),
                "tol" => cfg.tol = value.parse().with_context(ctx)?,
                "max_outer" => cfg.max_outer = value.parse().with_context(ctx)?,
                "max_inner" => cfg.max_inner = value.parse().with_context(ctx)?,
                "omega" => cfg.omega = value.parse().with_context(ctx)?,
                "delta" => cfg.delta = value.parse().with_context(ctx)?,
                "a0" => cfg.a0 = value.parse().with_context(ctx)?,
                "E" => cfg.e_gate = value.parse().with_context(ctx)?,
                "eps0" => cfg.eps0 = value.parse().with_context(ctx)?,
                "seed" => cfg.seed = value.parse().with_context(ctx)?,
                "workers" => cfg.workers = value.parse().with_context(ctx)?,
                "trials" => cfg.trials = value.parse().with_context(ctx)?,
                "mms_case" => cfg.mms_case = value.to_string(),
                "csv_timings" => cfg.csv_timings = value.parse().with_context(ctx)?,
                other => bail!("unknown config key `{other}` (line {})", lineno + 1),
            }
        }

        cfg.forcing = match forcing_name.as_deref() {
            None | Some("taylor_green") => ForcingSpec::TaylorGreen { amplitude },
            Some("kolmogorov") => ForcingSpec::Kolmogorov { amplitude, k: forcing_k },
            Some("modes") => ForcingSpec::Modes { f_modes, g_modes },
            Some(other) => bail!("unknown forcing preset `{other}`"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reject invalid physics or solver settings, naming the violated
    /// invariant.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 {
            bail!("dim must be 2 (3-D grids are an extension point, not built)");
        }
        Grid::with_dealias(self.n, self.dealias.0, self.dealias.1)
            .map_err(|e| anyhow!("{e}"))?;
        FluidParams::new(self.mu, self.lambda, self.kappa, self.eps)
            .map_err(|e| anyhow!("{e}"))?;
        if !(self.tol > 0.0) {
            bail!("tolerance must be positive, got tol = {}", self.tol);
        }
        if !(self.a0 > 0.0 && self.e_gate > 0.0 && self.eps0 > 0.0) {
            bail!("gates a0, E, eps0 must be positive");
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            bail!("relaxation omega must lie in (0, 1], got {}", self.omega);
        }
        if self.delta < 0.0 {
            bail!("regularization delta must be nonnegative, got {}", self.delta);
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if let ForcingSpec::Modes { f_modes, g_modes } = &self.forcing {
            for list in [f_modes, g_modes] {
                check_hermitian(list, self.n)?;
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(parse(x))) == parse(x)`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "dealias = {}/{}", self.dealias.0, self.dealias.1);
        let _ = writeln!(s, "mu = {}", self.mu);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "kappa = {}", self.kappa);
        let _ = writeln!(s, "eps = {}", self.eps);
        let eps_list: Vec<String> = self.eps_list.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(s, "eps_list = {}", eps_list.join(","));
        match &self.forcing {
            ForcingSpec::TaylorGreen { amplitude } => {
                let _ = writeln!(s, "forcing = taylor_green");
                let _ = writeln!(s, "amplitude = {amplitude}");
            }
            ForcingSpec::Kolmogorov { amplitude, k } => {
                let _ = writeln!(s, "forcing = kolmogorov");
                let _ = writeln!(s, "amplitude = {amplitude}");
                let _ = writeln!(s, "forcing_k = {k}");
            }
            ForcingSpec::Modes { f_modes, g_modes } => {
                let _ = writeln!(s, "forcing = modes");
                for m in f_modes {
                    let _ = writeln!(
                        s,
                        "f_mode = {},{},{},{},{},{}",
                        m.k1, m.k2, m.fx.0, m.fx.1, m.fy.0, m.fy.1
                    );
                }
                for m in g_modes {
                    let _ = writeln!(
                        s,
                        "g_mode = {},{},{},{},{},{}",
                        m.k1, m.k2, m.fx.0, m.fx.1, m.fy.0, m.fy.1
                    );
                }
            }
        }
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "max_outer = {}", self.max_outer);
        let _ = writeln!(s, "max_inner = {}", self.max_inner);
        let _ = writeln!(s, "omega = {}", self.omega);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "a0 = {}", self.a0);
        let _ = writeln!(s, "E = {}", self.e_gate);
        let _ = writeln!(s, "eps0 = {}", self.eps0);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "mms_case = {}", self.mms_case);
        let _ = writeln!(s, "csv_timings = {}", self.csv_timings);
        s
    }

    pub fn grid(&self) -> Grid {
        Grid::with_dealias(self.n, self.dealias.0, self.dealias.1).expect("validated")
    }

    pub fn params(&self) -> FluidParams {
        FluidParams::new(self.mu, self.lambda, self.kappa, self.eps).expect("validated")
    }

    pub fn params_for(&self, eps: f64) -> Result<FluidParams> {
        FluidParams::new(self.mu, self.lambda, self.kappa, eps).map_err(|e| anyhow!("{e}"))
    }
}

/// Mode lists must describe a real field: entries at `k` and `-k` have to be
/// complex conjugates (each entry alone is fine; the builder mirrors it).
fn check_hermitian(list: &[ModeEntry], n: usize) -> Result<()> {
    let half = n as i64 / 2;
    let mut by_key = BTreeMap::new();
    for m in list {
        if m.k1 <= -half || m.k1 > half || m.k2 <= -half || m.k2 > half {
            bail!("mode ({}, {}) outside the grid wavenumber range", m.k1, m.k2);
        }
        if by_key.insert((m.k1, m.k2), *m).is_some() {
            bail!("mode ({}, {}) listed twice", m.k1, m.k2);
        }
    }
    for (key, m) in &by_key {
        if let Some(mirror) = by_key.get(&(-key.0, -key.1)) {
            let conj_ok = |a: (f64, f64), b: (f64, f64)| a.0 == b.0 && a.1 == -b.1;
            if !(conj_ok(m.fx, mirror.fx) && conj_ok(m.fy, mirror.fy)) {
                bail!(
                    "modes ({}, {}) and ({}, {}) violate Hermitian symmetry (real forcing)",
                    key.0,
                    key.1,
                    -key.0,
                    -key.1
                );
            }
        }
    }
    Ok(())
}

/// Build the forcing pair `(f, g)` on a grid.
pub fn build_forcing(
    spec: &ForcingSpec,
    grid: Grid,
) -> (
    lowmach_core::spectral::SpectralVectorField,
    lowmach_core::spectral::SpectralVectorField,
) {
    use lowmach_core::spectral::{SpectralField, SpectralVectorField};
    match spec {
        ForcingSpec::TaylorGreen { amplitude } => {
            let a = *amplitude;
            let f = SpectralVectorField::from_fns(
                grid,
                move |x, y| a * x.sin() * y.cos(),
                move |x, y| -a * x.cos() * y.sin(),
            );
            (f, SpectralVectorField::zeros(grid))
        }
        ForcingSpec::Kolmogorov { amplitude, k } => {
            let a = *amplitude;
            let kk = *k as f64;
            let f = SpectralVectorField::from_fns(grid, move |_, y| a * (kk * y).sin(), |_, _| 0.0);
            (f, SpectralVectorField::zeros(grid))
        }
        ForcingSpec::Modes { f_modes, g_modes } => {
            let build = |modes: &[ModeEntry]| {
                let mut fx = SpectralField::zeros(grid);
                let mut fy = SpectralField::zeros(grid);
                for m in modes {
                    fx.set_mode_pair(m.k1, m.k2, Complex64::new(m.fx.0, m.fx.1));
                    fy.set_mode_pair(m.k1, m.k2, Complex64::new(m.fy.0, m.fy.1));
                }
                SpectralVectorField::new(fx, fy)
            };
            (build(f_modes), build(g_modes))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "
            n = 64
            mu = 0.7
            lambda = 0.2
            eps = 0.1
            eps_list = 0.2,0.1,0.05
            forcing = kolmogorov
            amplitude = 2.5
            forcing_k = 3
            tol = 1e-9
            seed = 99
            csv_timings = true
        ";
        let a = RunConfig::parse(text).unwrap();
        let b = RunConfig::parse(&a.to_text()).unwrap();
        assert_eq!(a, b);

        let modes = "
            forcing = modes
            f_mode = 1,0, 0.0,-0.5, 0.0,0.0
            f_mode = 0,2, 0.25,0.0, 0.0,0.125
            g_mode = 1,1, 0.1,0.1, 0.0,0.0
        ";
        let a = RunConfig::parse(modes).unwrap();
        let b = RunConfig::parse(&a.to_text()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("mu = -1").is_err());
        assert!(RunConfig::parse("n = 12").is_err());
        assert!(RunConfig::parse("tol = 0").is_err());
        assert!(RunConfig::parse("bogus_key = 1").is_err());
        assert!(RunConfig::parse("omega = 1.5").is_err());
        assert!(RunConfig::parse("eps = 0").is_err());
        assert!(RunConfig::parse("mu = 1\nmu = 2").is_err());
        assert!(RunConfig::parse("dim = 3").is_err());
    }

    #[test]
    fn hermitian_violation_rejected() {
        let bad = "
            forcing = modes
            f_mode = 1,0, 0.0,0.5, 0.0,0.0
            f_mode = -1,0, 0.0,0.5, 0.0,0.0
        ";
        let err = RunConfig::parse(bad).unwrap_err();
        assert!(format!("{err:#}").contains("Hermitian"), "{err:#}");

        let good = "
            forcing = modes
            f_mode = 1,0, 0.0,0.5, 0.0,0.0
            f_mode = -1,0, 0.0,-0.5, 0.0,0.0
        ";
        assert!(RunConfig::parse(good).is_ok());
    }

    #[test]
    fn forcing_presets_build_real_fields() {
        let grid = Grid::new(32).unwrap();
        let cfg = RunConfig::parse("forcing = taylor_green\namplitude = 2.0").unwrap();
        let (f, g) = build_forcing(&cfg.forcing, grid);
        assert!(g.max_abs_coeff() == 0.0);
        // f = A (sin x cos y, -cos x sin y): check one coefficient.
        let c = f.x().coeff(1, 1);
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-14, "{c}");

        let cfg = RunConfig::parse("forcing = kolmogorov\namplitude = 1.0\nforcing_k = 2").unwrap();
        let (f, _) = build_forcing(&cfg.forcing, grid);
        let c = f.x().coeff(0, 2);
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-14, "{c}");

        // Explicit modes match the same Kolmogorov field.
        let cfg2 = RunConfig::parse(
            "forcing = modes\nf_mode = 0,2, 0.0,-0.5, 0.0,0.0",
        )
        .unwrap();
        let (f2, _) = build_forcing(&cfg2.forcing, grid);
        assert!((&f2 - &f).max_abs_coeff() < 1e-14);
    }
}
