use lowmach_core::fields::FluidParams;
use lowmach_core::fixed_point::OuterOpts;
use lowmach_core::spectral::{Grid, SpectralVectorField};
use lowmach_core::sweep::epsilon_sweep;

fn main() {
    let grid = Grid::new(32).unwrap();
    let f = SpectralVectorField::from_fns(grid, |x, y| x.sin() * y.cos(), |x, y| -(x.cos() * y.sin()));
    let g = SpectralVectorField::zeros(grid);
    let base = FluidParams::new(1.0, 0.0, 1.0, 0.05).unwrap();
    let (_, stats) = epsilon_sweep(&f, &g, &base, &[0.1, 0.05, 0.025, 0.0125], &OuterOpts::default()).unwrap();
    for st in &stats {
        let k0 = st.k0_discard_history.last().unwrap();
        println!("k0_discard = [{:.3e}, {:.3e}, {:.3e}]", k0[0], k0[1], k0[2]);
    }
    for w in stats.windows(2) {
        let a = w[0].k0_discard_history.last().unwrap();
        let b = w[1].k0_discard_history.last().unwrap();
        println!("shrink factors: mom {:.6}, energy {:.10}", a[1] / b[1], a[2] / b[2]);
    }
}
