//! State snapshot file (`state.bin`).
//!
//! Little-endian layout:
//!
//! ```text
//! magic   8 bytes  b"LMSNAP01"
//! n       u32      grid points per axis
//! num     u32      dealias fraction numerator
//! den     u32      dealias fraction denominator
//! mu, lambda, kappa, eps   4 x f64
//! count   u32      number of fields (7)
//! per field:
//!   name_len u8, name bytes (ascii)
//!   n        u32  (repeated per field, must match the header)
//!   coeffs   n*n complex pairs (re f64, im f64), row-major over the
//!            wavenumber storage indices (axis-0 major), FFT index order
//! ```
//!
//! Field order: `u_inc_x, u_inc_y, p_inc, v_x, v_y, eta, theta`.

use anyhow::{bail, Context, Result};
use lowmach_core::fields::{FluidParams, SplitState};
use lowmach_core::spectral::{Grid, SpectralField, SpectralVectorField};
use lowmach_core::Complex64;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"LMSNAP01";
const FIELD_NAMES: [&str; 7] = ["u_inc_x", "u_inc_y", "p_inc", "v_x", "v_y", "eta", "theta"];

pub fn save(path: &Path, grid: Grid, params: &FluidParams, state: &SplitState) -> Result<()> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    w.write_all(MAGIC)?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    let (num, den) = grid.dealias_fraction();
    w.write_all(&num.to_le_bytes())?;
    w.write_all(&den.to_le_bytes())?;
    for v in [params.mu, params.lambda, params.kappa, params.eps] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(FIELD_NAMES.len() as u32).to_le_bytes())?;
    let fields: [&SpectralField; 7] = [
        state.u_inc.x(),
        state.u_inc.y(),
        &state.p_inc,
        state.v.x(),
        state.v.y(),
        &state.eta,
        &state.theta,
    ];
    for (name, field) in FIELD_NAMES.iter().zip(fields) {
        w.write_all(&[name.len() as u8])?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(grid.n() as u32).to_le_bytes())?;
        for c in field.coeffs() {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<(Grid, FluidParams, SplitState)> {
    let mut r = std::io::BufReader::new(
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{} is not a state snapshot (bad magic)", path.display());
    }
    let n = read_u32(&mut r)? as usize;
    let num = read_u32(&mut r)?;
    let den = read_u32(&mut r)?;
    let grid = Grid::with_dealias(n, num, den).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mu = read_f64(&mut r)?;
    let lambda = read_f64(&mut r)?;
    let kappa = read_f64(&mut r)?;
    let eps = read_f64(&mut r)?;
    let params = FluidParams::new(mu, lambda, kappa, eps).map_err(|e| anyhow::anyhow!("{e}"))?;
    let count = read_u32(&mut r)? as usize;
    if count != FIELD_NAMES.len() {
        bail!("expected {} fields, snapshot has {count}", FIELD_NAMES.len());
    }

    let mut fields = Vec::with_capacity(count);
    for want_name in FIELD_NAMES {
        let mut len = [0u8; 1];
        r.read_exact(&mut len)?;
        let mut name = vec![0u8; len[0] as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)?;
        if name != want_name {
            bail!("unexpected field `{name}`, wanted `{want_name}`");
        }
        let field_n = read_u32(&mut r)? as usize;
        if field_n != n {
            bail!("field `{name}` has n = {field_n}, header says {n}");
        }
        let mut coeffs = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            coeffs.push(Complex64::new(re, im));
        }
        fields.push(SpectralField::from_coeffs(grid, coeffs));
    }
    let mut it = fields.into_iter();
    let state = SplitState {
        u_inc: SpectralVectorField::new(it.next().unwrap(), it.next().unwrap()),
        p_inc: it.next().unwrap(),
        v: SpectralVectorField::new(it.next().unwrap(), it.next().unwrap()),
        eta: it.next().unwrap(),
        theta: it.next().unwrap(),
    };
    Ok((grid, params, state))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
