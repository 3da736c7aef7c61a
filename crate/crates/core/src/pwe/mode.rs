//! Guided Bloch modes: band tracking, ω ↔ k inversion, group index, gauge
//! fixing and the unit-cell flux normalization.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CrystalGeometry;
use crate::pwe::grid::{GridModeSolver, GridState};
use crate::pwe::plane_wave::Parity;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    Raw,
    /// E_y at the strongest on-axis sample of the periodic part is real and positive.
    AxisAntinodeReal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    X,
    Y,
}

impl std::str::FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Orientation::X),
            "y" => Ok(Orientation::Y),
            other => Err(Error::Config(format!("orientation must be x or y, got '{other}'"))),
        }
    }
}

/// Guided Bloch mode sampled on the staggered grid of one unit cell.
///
/// Field arrays hold the periodic parts u(r) = F(r)·e^{−2πikx}, index
/// `i * ny + jj` with `jj = ny/2` on the waveguide axis. `ex` sits at
/// (i, jj+1/2), `ey` at (i+1/2, jj), `hz` at nodes.
#[derive(Clone, Debug)]
pub struct BlochMode {
    pub omega: f64,
    pub k: f64,
    pub n_g: f64,
    pub parity: Parity,
    pub resolution: usize,
    pub nx: usize,
    pub ny: usize,
    pub ex: Vec<C64>,
    pub ey: Vec<C64>,
    pub hz: Vec<C64>,
    pub eps_ex: Vec<f64>,
    pub eps_ey: Vec<f64>,
    pub gauge: Gauge,
    /// (1/a)∫_cell Re[E×H*]_x dA, twice the power carried by the mode.
    pub norm: f64,
    /// Time-averaged electromagnetic energy per unit cell.
    pub energy: f64,
    pub residual: f64,
}

impl BlochMode {
    pub fn from_state(solver: &GridModeSolver, state: &GridState, n_g: f64) -> Self {
        let n_g = n_g.abs();
        let (ex_full, ey_full) = solver.electric_field(state);
        let h = solver.dx();
        let (nx, ny) = (solver.nx, solver.ny);
        let mut ex = vec![C64::new(0.0, 0.0); nx * ny];
        let mut ey = vec![C64::new(0.0, 0.0); nx * ny];
        let mut hz = vec![C64::new(0.0, 0.0); nx * ny];
        for i in 0..nx {
            let node_phase = C64::from_polar(1.0, -TWO_PI * state.k * i as f64 * h);
            let half_phase = C64::from_polar(1.0, -TWO_PI * state.k * (i as f64 + 0.5) * h);
            for jj in 0..ny {
                let n = i * ny + jj;
                hz[n] = state.hz[n] * node_phase;
                ex[n] = ex_full[n] * node_phase;
                ey[n] = ey_full[n] * half_phase;
            }
        }
        let mut mode = Self {
            omega: state.omega,
            k: state.k,
            n_g,
            parity: state.parity,
            resolution: solver.resolution,
            nx,
            ny,
            ex,
            ey,
            hz,
            eps_ex: solver.eps_ex.clone(),
            eps_ey: solver.eps_ey.clone(),
            gauge: Gauge::Raw,
            norm: 0.0,
            energy: 0.0,
            residual: solver.full_residual(state),
        };
        mode.norm = mode.flux_integral();
        mode.energy = mode.cell_energy();
        if mode.norm < 0.0 {
            mode.time_reverse();
        }
        mode.fix_gauge();
        mode
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    fn scale(&mut self, c: C64) {
        for v in self.ex.iter_mut().chain(self.ey.iter_mut()).chain(self.hz.iter_mut()) {
            *v *= c;
        }
    }

    /// Replaces the mode by its time-reversed partner at −k, which carries
    /// the opposite flux.
    pub fn time_reverse(&mut self) {
        for v in self.ex.iter_mut().chain(self.ey.iter_mut()) {
            *v = v.conj();
        }
        for v in self.hz.iter_mut() {
            *v = -v.conj();
        }
        self.k = -self.k;
        self.norm = -self.norm;
        self.gauge = Gauge::Raw;
    }

    /// Rotates the global phase so that the on-axis E_y maximum is real positive.
    pub fn fix_gauge(&mut self) {
        let jj = self.ny / 2;
        let mut best = (0usize, 0.0f64);
        for i in 0..self.nx {
            let m = self.ey[i * self.ny + jj].norm();
            if m > best.1 * (1.0 + 1e-12) {
                best = (i, m);
            }
        }
        let idx = best.0 * self.ny + jj;
        let v = self.ey[idx];
        if v.norm() > 0.0 {
            let rot = v.conj() / v.norm();
            self.scale(rot);
            self.ey[idx] = C64::new(v.norm(), 0.0);
        }
        self.gauge = Gauge::AxisAntinodeReal;
    }

    /// Index of the on-axis E_y antinode within the cell.
    pub fn axis_antinode(&self) -> (f64, f64) {
        let jj = self.ny / 2;
        let i = (0..self.nx)
            .max_by(|&a, &b| {
                self.ey[a * self.ny + jj]
                    .norm()
                    .partial_cmp(&self.ey[b * self.ny + jj].norm())
                    .unwrap()
            })
            .unwrap_or(0);
        ((i as f64 + 0.5) * self.dx(), 0.0)
    }

    fn wrap(&self, ig: i64) -> (usize, i64) {
        let n = self.nx as i64;
        (ig.rem_euclid(n) as usize, ig.div_euclid(n))
    }

    fn row(&self, j: i64) -> Option<usize> {
        let jj = j + (self.ny / 2) as i64;
        (jj >= 0 && jj < self.ny as i64).then_some(jj as usize)
    }

    fn bloch(&self, x: f64) -> C64 {
        C64::from_polar(1.0, TWO_PI * self.k * x)
    }

    /// Full field E_y at ((ig+1/2)Δ, jΔ); zero outside the supercell rows.
    pub fn ey_full(&self, ig: i64, j: i64) -> C64 {
        let Some(jj) = self.row(j) else { return C64::new(0.0, 0.0) };
        let (i, _) = self.wrap(ig);
        self.ey[i * self.ny + jj] * self.bloch((ig as f64 + 0.5) * self.dx())
    }

    /// Full field E_x at (igΔ, (j+1/2)Δ).
    pub fn ex_full(&self, ig: i64, j: i64) -> C64 {
        let Some(jj) = self.row(j) else { return C64::new(0.0, 0.0) };
        let (i, _) = self.wrap(ig);
        self.ex[i * self.ny + jj] * self.bloch(ig as f64 * self.dx())
    }

    /// Full field H_z at (igΔ, jΔ).
    pub fn hz_full(&self, ig: i64, j: i64) -> C64 {
        let Some(jj) = self.row(j) else { return C64::new(0.0, 0.0) };
        let (i, _) = self.wrap(ig);
        self.hz[i * self.ny + jj] * self.bloch(ig as f64 * self.dx())
    }

    /// Grid edge carrying the given orientation nearest to `r0`:
    /// returns (ig, j) indices in the convention of `ex_full`/`ey_full`.
    pub fn edge_index(&self, r0: (f64, f64), n_d: Orientation) -> (i64, i64) {
        edge_index(self.resolution, r0, n_d)
    }

    /// Full-field E·n_d at the edge nearest to r0 (Bloch periodicity wraps r0).
    pub fn e_full_at(&self, r0: (f64, f64), n_d: Orientation) -> C64 {
        let (ig, j) = self.edge_index(r0, n_d);
        match n_d {
            Orientation::X => self.ex_full(ig, j),
            Orientation::Y => self.ey_full(ig, j),
        }
    }

    /// Periodic-part E_pg·n_d at the edge nearest to r0.
    pub fn e_periodic_at(&self, r0: (f64, f64), n_d: Orientation) -> C64 {
        let (ig, j) = self.edge_index(r0, n_d);
        let Some(jj) = self.row(j) else { return C64::new(0.0, 0.0) };
        let (i, _) = self.wrap(ig);
        match n_d {
            Orientation::X => self.ex[i * self.ny + jj],
            Orientation::Y => self.ey[i * self.ny + jj],
        }
    }

    /// (1/a)∫_cell Re[E_y H_z*] dA with H_z averaged onto the E_y points.
    pub fn flux_integral(&self) -> f64 {
        let h = self.dx();
        let mut acc = 0.0;
        for i in 0..self.nx as i64 {
            for j in -(self.ny as i64 / 2)..(self.ny as i64 / 2) {
                let hz = 0.5 * (self.hz_full(i, j) + self.hz_full(i + 1, j));
                acc += (self.ey_full(i, j) * hz.conj()).re;
            }
        }
        acc * h * h
    }

    /// ¼∫_cell (ε|E|² + |H|²) dA.
    pub fn cell_energy(&self) -> f64 {
        let h = self.dx();
        let mut acc = 0.0;
        for n in 0..self.nx * self.ny {
            acc += self.eps_ex[n] * self.ex[n].norm_sqr()
                + self.eps_ey[n] * self.ey[n].norm_sqr()
                + self.hz[n].norm_sqr();
        }
        0.25 * acc * h * h
    }

    /// Group index from the energy velocity, W / (a · P_mode).
    pub fn energy_velocity_group_index(&self) -> f64 {
        2.0 * self.energy / self.norm
    }
}

/// Grid edge of the given orientation through the cell containing r0:
/// E_x edges sit at (iΔ, (j+1/2)Δ), E_y edges at ((i+1/2)Δ, jΔ).
pub fn edge_index(resolution: usize, r0: (f64, f64), n_d: Orientation) -> (i64, i64) {
    let res = resolution as f64;
    match n_d {
        Orientation::X => ((r0.0 * res).round() as i64, (r0.1 * res).floor() as i64),
        Orientation::Y => ((r0.0 * res).floor() as i64, (r0.1 * res).round() as i64),
    }
}

/// Group index n_g = dk/dω of a band ω(k) by centred differences, halving Δk
/// until two successive estimates agree to `rel_tol`.
pub fn group_index<F>(band: F, k: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    group_index_with(band, k, 2e-3, 1e-3)
}

pub fn group_index_with<F>(band: F, k: f64, dk0: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let slope = |dk: f64| -> Result<f64> { Ok((band(k + dk)? - band(k - dk)?) / (2.0 * dk)) };
    let mut dk = dk0;
    let mut prev = slope(dk)?;
    for _ in 0..12 {
        dk *= 0.5;
        let cur = slope(dk)?;
        if cur.abs() < 1e-5 {
            return Err(Error::BandEdge { k, slope: cur });
        }
        if ((cur - prev) / cur).abs() < rel_tol {
            return Ok(1.0 / cur);
        }
        prev = cur;
    }
    Err(Error::BandEdge { k, slope: prev })
}

#[derive(Clone, Debug)]
pub struct ModeSearchOptions {
    pub resolution: usize,
    pub pad: f64,
    pub samples: usize,
    pub concentration_threshold: f64,
    /// Zone-edge frequency near which the primary band starts; the lowest
    /// guided even state is used when absent.
    pub edge_omega_hint: Option<f64>,
}

impl Default for ModeSearchOptions {
    fn default() -> Self {
        Self {
            resolution: 32,
            pad: 1.0,
            samples: 33,
            concentration_threshold: 0.5,
            edge_omega_hint: None,
        }
    }
}

/// The primary (E_y-even) guided band of a line defect on a given grid.
#[derive(Clone, Debug)]
pub struct GuidedBand {
    pub solver: GridModeSolver,
    pub gap: (f64, f64),
    pub threshold: f64,
    /// Sampled (k, ω) from the zone edge inward while the band stays inside
    /// the gap and below the light line.
    pub samples: Vec<(f64, f64)>,
}

impl GuidedBand {
    /// Samples the band at up to `opts.samples` points k ∈ [0, 0.5],
    /// starting at the zone edge. `gap` is the bulk TE gap (a/λ).
    pub fn trace(geometry: &CrystalGeometry, gap: (f64, f64), opts: &ModeSearchOptions) -> Result<Self> {
        let solver = GridModeSolver::new(geometry, opts.resolution, opts.pad)?;
        let mut band = Self {
            solver,
            gap,
            threshold: opts.concentration_threshold,
            samples: Vec::new(),
        };
        let start = band.find_edge_state(opts.edge_omega_hint)?;
        band.samples.push((0.5, start.omega));
        let n = opts.samples.max(3);
        let dk = 0.5 / (n - 1) as f64;
        for s in 1..n {
            let k = 0.5 - s as f64 * dk;
            let guess = band.predict(k);
            match band.guided_state(k, guess) {
                Ok(st) if st.omega > gap.0 && st.omega < gap.1 && band.solver.below_light_line(k, st.omega) => {
                    band.samples.push((k, st.omega))
                }
                _ => break,
            }
        }
        band.samples.reverse();
        Ok(band)
    }

    fn find_edge_state(&self, hint: Option<f64>) -> Result<GridState> {
        let mid = 0.5 * (self.gap.0 + self.gap.1);
        let states = self.solver.solve_k(0.5, Parity::Even, hint.unwrap_or(mid), 8)?;
        let target = hint.unwrap_or(f64::NEG_INFINITY);
        states
            .into_iter()
            .filter(|s| s.omega > self.gap.0 && s.omega < self.gap.1)
            .filter(|s| s.concentration >= self.threshold)
            .min_by(|a, b| (a.omega - target).abs().partial_cmp(&(b.omega - target).abs()).unwrap())
            .ok_or_else(|| {
                Error::ModeSearch(format!(
                    "no even guided state inside the gap ({:.4}, {:.4}) at k = 0.5",
                    self.gap.0, self.gap.1
                ))
            })
    }

    fn predict(&self, k: f64) -> f64 {
        match self.samples.len() {
            0 => 0.5 * (self.gap.0 + self.gap.1),
            1 => self.samples[0].1,
            _ => {
                let mut pts = self.samples.clone();
                pts.sort_by(|a, b| (a.0 - k).abs().partial_cmp(&(b.0 - k).abs()).unwrap());
                let (k1, w1) = pts[0];
                let (k2, w2) = pts[1];
                if (k1 - k2).abs() < 1e-15 {
                    return w1;
                }
                w1 + (w2 - w1) * (k - k1) / (k2 - k1)
            }
        }
    }

    fn guided_state(&self, k: f64, guess: f64) -> Result<GridState> {
        let states = self.solver.solve_k(k, Parity::Even, guess, 3)?;
        states
            .into_iter()
            .filter(|s| s.concentration >= self.threshold)
            .min_by(|a, b| (a.omega - guess).abs().partial_cmp(&(b.omega - guess).abs()).unwrap())
            .ok_or_else(|| Error::ModeSearch(format!("no guided state near ω = {guess:.5} at k = {k}")))
    }

    /// Guided eigenstate at wavevector k.
    pub fn state_at(&self, k: f64) -> Result<GridState> {
        let k = k.clamp(0.0, 0.5);
        self.guided_state(k, self.interpolate(k))
    }

    fn interpolate(&self, k: f64) -> f64 {
        let s = &self.samples;
        if s.len() < 2 {
            return self.predict(k);
        }
        for w in s.windows(2) {
            if k >= w[0].0 && k <= w[1].0 {
                let t = (k - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + t * (w[1].1 - w[0].1);
            }
        }
        self.predict(k)
    }

    /// Guided-band frequency at k; symmetric under k → −k and k → 1 − k.
    pub fn omega_at(&self, k: f64) -> Result<f64> {
        let k = k.rem_euclid(1.0);
        let k = if k > 0.5 { 1.0 - k } else { k };
        Ok(self.state_at(k)?.omega)
    }

    /// |dk/dω| of the guided band at k from the analytic k-derivative of
    /// the grid operator.
    pub fn group_index_at(&self, k: f64) -> Result<f64> {
        let state = self.state_at(k)?;
        let vg = self.solver.group_velocity(&state);
        if vg.abs() < 1e-5 {
            return Err(Error::BandEdge { k, slope: vg });
        }
        Ok(1.0 / vg.abs())
    }

    /// Same quantity by adaptive centred differences of ω(k).
    pub fn group_index_fd_at(&self, k: f64) -> Result<f64> {
        let dk0 = (0.25 * (0.5 - k)).clamp(1e-5, 2e-3);
        Ok(group_index_with(|q| self.omega_at(q), k, dk0, 1e-3)?.abs())
    }

    pub fn k_range(&self) -> (f64, f64) {
        (self.samples.first().map_or(0.5, |s| s.0), 0.5)
    }

    pub fn omega_range(&self) -> (f64, f64) {
        let lo = self.samples.iter().map(|s| s.1).fold(f64::MAX, f64::min);
        let hi = self.samples.iter().map(|s| s.1).fold(f64::MIN, f64::max);
        (lo, hi)
    }

    pub fn mode_at_k(&self, k: f64) -> Result<BlochMode> {
        let state = self.state_at(k)?;
        let n_g = self.group_index_at(k)?;
        Ok(BlochMode::from_state(&self.solver, &state, n_g))
    }

    /// k on the sampled band where ω(k) = omega_target.
    pub fn k_for_omega(&self, omega_target: f64) -> Result<f64> {
        let (lo, hi) = self.omega_range();
        if omega_target < lo || omega_target > hi {
            return Err(Error::ModeSearch(format!(
                "ω = {omega_target:.5} outside the guided band range [{lo:.5}, {hi:.5}]"
            )));
        }
        let brackets: Vec<(f64, f64)> = self
            .samples
            .windows(2)
            .filter(|w| (w[0].1 - omega_target) * (w[1].1 - omega_target) <= 0.0)
            .map(|w| (w[0].0, w[1].0))
            .collect();
        if brackets.len() > 1 {
            return Err(Error::Multivalued(format!(
                "ω = {omega_target:.5} is reached at {} points of the band",
                brackets.len()
            )));
        }
        let (mut a, mut b) = brackets
            .first()
            .copied()
            .ok_or_else(|| Error::ModeSearch(format!("no bracket for ω = {omega_target:.5}")))?;
        let mut fa = self.omega_at(a)? - omega_target;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let fm = self.omega_at(m)? - omega_target;
            if fm == 0.0 || (b - a) < 1e-12 {
                return Ok(m);
            }
            if fa * fm <= 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        Ok(0.5 * (a + b))
    }

    pub fn mode_at_omega(&self, omega_target: f64) -> Result<BlochMode> {
        let k = self.k_for_omega(omega_target)?;
        self.mode_at_k(k)
    }

    /// k where the group index equals `ng_target`, searched on the monotone
    /// segment adjacent to the zone edge.
    pub fn k_for_group_index(&self, ng_target: f64) -> Result<f64> {
        let (k_lo, _) = self.k_range();
        let n = self.samples.len().max(2);
        let dk = (0.5 - k_lo) / (n - 1) as f64;
        let mut hi_k = 0.5 - 0.25 * dk;
        let mut hi_ng = self.group_index_at(hi_k)?;
        let mut step = 0;
        while hi_ng < ng_target {
            step += 1;
            if step > 30 {
                return Err(Error::ModeSearch(format!(
                    "n_g = {ng_target} not reached; largest sampled n_g = {hi_ng:.2}"
                )));
            }
            hi_k = 0.5 - (0.5 - hi_k) * 0.5;
            hi_ng = self.group_index_at(hi_k)?;
        }
        let mut lo_k = hi_k;
        let mut lo_ng = hi_ng;
        while lo_ng > ng_target {
            let next = lo_k - dk;
            if next < k_lo {
                return Err(Error::ModeSearch(format!(
                    "n_g = {ng_target} below the guided band's range (n_g = {lo_ng:.2} at k = {lo_k:.4})"
                )));
            }
            let ng = self.group_index_at(next)?;
            if ng > lo_ng {
                return Err(Error::Multivalued(format!(
                    "group index is not monotone near k = {next:.4}"
                )));
            }
            hi_k = lo_k;
            lo_k = next;
            lo_ng = ng;
        }
        let (mut a, mut b) = (lo_k, hi_k);
        for _ in 0..50 {
            let m = 0.5 * (a + b);
            let ng = self.group_index_at(m)?;
            if (ng - ng_target).abs() < 1e-4 * ng_target || b - a < 1e-10 {
                return Ok(m);
            }
            if ng < ng_target {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    pub fn mode_at_group_index(&self, ng_target: f64) -> Result<BlochMode> {
        let k = self.k_for_group_index(ng_target)?;
        self.mode_at_k(k)
    }
}

fn overlap(a: &GridState, b: &GridState) -> f64 {
    let mut ab = C64::new(0.0, 0.0);
    let (mut aa, mut bb) = (0.0, 0.0);
    for (x, y) in a.hz.iter().zip(&b.hz) {
        ab += x.conj() * y;
        aa += x.norm_sqr();
        bb += y.norm_sqr();
    }
    ab.norm() / (aa * bb).sqrt().max(1e-300)
}

/// Every guided Bloch mode of either mirror parity at frequency `omega`
/// with 0 ≤ k ≤ 1/2, each oriented to carry power towards +x. Crossings are
/// bracketed on `samples` k points by following eigenvectors between
/// neighbouring samples and then refined by safeguarded secant steps in k.
pub fn guided_modes_at(
    solver: &GridModeSolver,
    omega: f64,
    gap: (f64, f64),
    threshold: f64,
    samples: usize,
) -> Result<Vec<BlochMode>> {
    let n = samples.max(3);
    let mut out = Vec::new();
    for parity in [Parity::Even, Parity::Odd] {
        let guided = |k: f64| -> Result<Vec<GridState>> {
            Ok(solver
                .solve_k(k, parity, omega, 4)?
                .into_iter()
                .filter(|s| {
                    s.concentration >= threshold
                        && s.omega > gap.0
                        && s.omega < gap.1
                        && solver.below_light_line(s.k, s.omega)
                })
                .collect())
        };
        let ks: Vec<f64> = (0..n).map(|i| 0.5 * i as f64 / (n - 1) as f64).collect();
        let per_k: Vec<Vec<GridState>> = ks.iter().map(|&k| guided(k)).collect::<Result<_>>()?;
        let mut roots: Vec<GridState> = Vec::new();
        for w in 0..n - 1 {
            for a in &per_k[w] {
                let Some(b) = per_k[w + 1]
                    .iter()
                    .max_by(|x, y| overlap(a, x).partial_cmp(&overlap(a, y)).unwrap())
                else {
                    continue;
                };
                if overlap(a, b) < 0.5 || (a.omega - omega) * (b.omega - omega) > 0.0 {
                    continue;
                }
                if let Some(root) = refine_crossing(omega, a, b, &guided)? {
                    if !roots.iter().any(|r| (r.k - root.k).abs() < 1e-6) {
                        roots.push(root);
                    }
                }
            }
        }
        for state in roots {
            let vg = solver.group_velocity(&state);
            out.push(BlochMode::from_state(solver, &state, 1.0 / vg.abs()));
        }
    }
    Ok(out)
}

fn refine_crossing<F>(omega: f64, a: &GridState, b: &GridState, guided: &F) -> Result<Option<GridState>>
where
    F: Fn(f64) -> Result<Vec<GridState>>,
{
    let (mut lo, mut hi) = (a.clone(), b.clone());
    let mut k = lo.k + (omega - lo.omega) * (hi.k - lo.k) / (hi.omega - lo.omega);
    let mut prev = lo.clone();
    for _ in 0..60 {
        let states = guided(k)?;
        let Some(cur) = states
            .into_iter()
            .max_by(|x, y| overlap(&prev, x).partial_cmp(&overlap(&prev, y)).unwrap())
        else {
            return Ok(None);
        };
        let f = cur.omega - omega;
        if f.abs() < 1e-12 {
            return Ok(Some(cur));
        }
        if (f > 0.0) == (lo.omega - omega > 0.0) {
            lo = cur.clone();
        } else {
            hi = cur.clone();
        }
        if (hi.k - lo.k).abs() < 1e-13 {
            return Ok(Some(cur));
        }
        // secant inside the bracket, bisection if it stalls
        let sec = lo.k + (omega - lo.omega) * (hi.k - lo.k) / (hi.omega - lo.omega);
        let (a_k, b_k) = (lo.k.min(hi.k), lo.k.max(hi.k));
        k = if sec > a_k + 0.05 * (b_k - a_k) && sec < b_k - 0.05 * (b_k - a_k) {
            sec
        } else {
            0.5 * (a_k + b_k)
        };
        prev = cur;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_band_group_index() {
        let ng = group_index(|k| Ok(k / 3.5), 0.2).unwrap();
        assert!((ng - 3.5).abs() < 1e-9);
    }

    #[test]
    fn flat_band_flagged() {
        let r = group_index(|_| Ok(0.3), 0.2);
        assert!(matches!(r, Err(Error::BandEdge { .. })));
    }

    #[test]
    fn edge_indices() {
        assert_eq!(edge_index(32, (0.5, 0.0), Orientation::Y), (16, 0));
        assert_eq!(edge_index(32, (0.5, 0.01), Orientation::X), (16, 0));
        assert_eq!(edge_index(32, (0.0, -0.49), Orientation::X), (0, -16));
        assert_eq!(edge_index(32, (0.0, 0.49), Orientation::X), (0, 15));
    }
}
