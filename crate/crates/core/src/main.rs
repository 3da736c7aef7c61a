use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pcwbeta::config::{RunConfig, Structure};
use pcwbeta::emission::reports_csv;
use pcwbeta::fdfd::dump::{write_field_dump, DEFAULT_SATURATION};
use pcwbeta::fdfd::BoundaryMode;
use pcwbeta::geometry::CrystalGeometry;
use pcwbeta::io::{color_pixmap, csv_bytes, gray_pixmap, sci, write_atomic, ColorScale};
use pcwbeta::pwe::{bulk_gap, solve_bands, GuidedBand, Orientation};
use pcwbeta::sweeps::convergence::{convergence_csv, SweepParameter, Target};
use pcwbeta::sweeps::map::{self, load_records, CellStatus, Quantity, RecordLog};
use pcwbeta::sweeps::phc::{phc_rad_map, rad_csv, RadRow};
use pcwbeta::sweeps::{convergence_sweep, map_operating_point, trace_band, OperatingPoint, WaveguideStudy};

#[derive(Parser, Debug)]
#[command(
    name = "pcwbeta",
    about = "Dipole emission into a 2D photonic-crystal waveguide",
    disable_version_flag = true
)]
struct Cli {
    /// TOML run manifest; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for map cells and band samples.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides output.directory).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// active or pml_only (overrides solver.boundary_mode).
    #[arg(long, global = true)]
    boundary: Option<BoundaryMode>,
    /// Grid cells per a (overrides solver.resolution).
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Print the version and the hash of the effective configuration.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Band diagram of the supercell and, for a waveguide, its guided band.
    Bands,
    /// Primary guided mode at a group index.
    Mode {
        #[arg(long)]
        ng: Option<f64>,
    },
    /// One dipole: emission report and field dump.
    Emit {
        #[arg(long)]
        ng: Option<f64>,
        #[arg(long, requires = "y")]
        x: Option<f64>,
        #[arg(long, requires = "x")]
        y: Option<f64>,
        #[arg(long)]
        orientation: Option<Orientation>,
    },
    /// Position maps over one unit cell.
    Map {
        #[arg(long)]
        quantity: Option<Quantity>,
        /// Group index targets; repeat for several.
        #[arg(long)]
        ng: Vec<f64>,
        /// Samples along x and y, e.g. 8x14.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Convergence sweep of one numerical parameter.
    Converge {
        #[arg(long)]
        param: Option<SweepParameter>,
        /// Comma-separated increasing values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        ng: Option<f64>,
        /// fp_rad or beta.
        #[arg(long)]
        target: Option<String>,
    },
    /// Emission of the crystal without the line defect.
    PhcRad {
        /// Add the frequency scan at the fixed probes.
        #[arg(long)]
        scan_frequency: bool,
        /// Skip the mid-gap position map.
        #[arg(long)]
        no_map: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.out.join(name);
        write_atomic(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn csv(&self) -> bool {
        self.cfg.output.wants("csv")
    }

    fn pnm(&self) -> bool {
        self.cfg.output.wants("pnm")
    }

    fn geometry(&self) -> Result<CrystalGeometry> {
        Ok(self.cfg.geometry.build()?)
    }

    fn gap(&self, g: &CrystalGeometry) -> Result<(f64, f64)> {
        if let Some(gap) = self.cfg.solver.gap {
            return Ok(gap);
        }
        bulk_gap(g, self.cfg.solver.pwe_cutoff, 9)?.context("the bulk crystal has no TE gap")
    }

    fn band(&self, g: &CrystalGeometry) -> Result<GuidedBand> {
        if self.cfg.geometry.structure != Structure::W1 {
            bail!("this subcommand needs geometry.structure = \"w1\"");
        }
        let gap = self.gap(g)?;
        let s = &self.cfg.solver;
        Ok(trace_band(g, gap, s.resolution, s.mode_pad)?)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.output {
        cfg.output.directory = o.clone();
    }
    if let Some(b) = cli.boundary {
        cfg.solver.boundary_mode = b;
    }
    if let Some(r) = cli.resolution {
        cfg.solver.resolution = r;
    }
    apply_subcommand_overrides(&mut cfg, cli.command.as_ref())?;
    cfg.validate()?;
    let hash = cfg.hash()?;
    if cli.version {
        println!("pcwbeta {} config {hash}", env!("CARGO_PKG_VERSION"));
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("starting the worker pool")?;
    }
    let ctx = Ctx {
        out: cfg.output.directory.clone(),
        cfg,
        hash,
    };
    ctx.write("config.toml", ctx.cfg.to_toml()?.as_bytes())?;
    match command {
        Command::Bands => bands(&ctx),
        Command::Mode { .. } => mode(&ctx),
        Command::Emit { .. } => emit(&ctx),
        Command::Map { .. } => run_map(&ctx),
        Command::Converge { .. } => converge(&ctx),
        Command::PhcRad { scan_frequency, no_map } => phc(&ctx, !no_map, scan_frequency),
    }
}

/// Folds subcommand flags into the configuration so the hash covers them.
fn apply_subcommand_overrides(cfg: &mut RunConfig, command: Option<&Command>) -> Result<()> {
    let study = &mut cfg.study;
    match command {
        Some(Command::Mode { ng: Some(ng) }) => study.emit.n_g_target = *ng,
        Some(Command::Emit { ng, x, y, orientation }) => {
            if let Some(ng) = ng {
                study.emit.n_g_target = *ng;
            }
            if let (Some(x), Some(y)) = (x, y) {
                study.emit.position = Some((*x, *y));
            }
            if let Some(o) = orientation {
                study.emit.orientation = *o;
            }
        }
        Some(Command::Map { quantity, ng, grid }) => {
            if let Some(q) = quantity {
                study.map.quantity = *q;
            }
            if !ng.is_empty() {
                study.map.ng_targets = ng.clone();
            }
            if let Some(g) = grid {
                let (a, b) = g
                    .split_once('x')
                    .with_context(|| format!("grid '{g}' is not of the form NXxNY"))?;
                study.map.grid = (a.trim().parse()?, b.trim().parse()?);
            }
        }
        Some(Command::Converge { param, values, ng, target }) => {
            if let Some(p) = param {
                study.convergence.parameter = *p;
            }
            if !values.is_empty() {
                study.convergence.values = values.clone();
            }
            if let Some(ng) = ng {
                study.convergence.n_g_target = *ng;
            }
            if let Some(t) = target {
                study.convergence.target = match t.as_str() {
                    "fp_rad" => Target::FpRad,
                    "beta" => Target::Beta,
                    other => bail!("unknown convergence target '{other}'"),
                };
            }
        }
        _ => {}
    }
    Ok(())
}

fn bands(ctx: &Ctx) -> Result<ExitCode> {
    let g = ctx.geometry()?;
    let s = &ctx.cfg.solver;
    let st = &ctx.cfg.study;
    let bs = solve_bands(&g, &st.k_list, st.bands, s.pwe_cutoff, s.mode_pad)?;
    let mut rows = Vec::new();
    for (ik, k) in bs.k_points.iter().enumerate() {
        for (b, w) in bs.bands[ik].iter().enumerate() {
            rows.push(vec![
                sci(*k),
                b.to_string(),
                sci(*w),
                bs.parity[ik][b].as_str().to_string(),
                sci(bs.n_g[ik][b]),
            ]);
        }
    }
    if ctx.csv() {
        ctx.write("bands.csv", &csv_bytes(&["k", "band", "omega", "parity", "n_g"], rows)?)?;
    }
    let mut summary = vec![format!("config_hash {}", ctx.hash)];
    let mut guided = Vec::new();
    let mut gap = None;
    if g.has_holes() {
        let gp = ctx.gap(&g)?;
        gap = Some(gp);
        summary.push(format!("gap {:.6} {:.6}", gp.0, gp.1));
    }
    if ctx.cfg.geometry.structure == Structure::W1 {
        let band = ctx.band(&g)?;
        for &(k, w) in &band.samples {
            let ng = band.group_index_at(k).unwrap_or(f64::NAN);
            guided.push((k, w, ng));
        }
        let (k0, k1) = band.k_range();
        let (w0, w1) = band.omega_range();
        summary.push(format!("guided_band k {k0:.6} {k1:.6} omega {w0:.6} {w1:.6}"));
        if ctx.csv() {
            let rows = guided.iter().map(|(k, w, n)| vec![sci(*k), sci(*w), sci(*n)]);
            ctx.write("guided_band.csv", &csv_bytes(&["k", "omega", "n_g"], rows)?)?;
        }
    }
    if ctx.pnm() {
        ctx.write("bands.pgm", &band_diagram(&bs.k_points, &bs.bands, &guided, gap)?)?;
    }
    let text = summary.join("\n") + "\n";
    print!("{text}");
    ctx.write("bands_summary.txt", text.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

/// Grayscale band diagram: k ∈ [0, 0.5] across, ω ∈ [0, ω_max] up, the gap
/// shaded and guided samples drawn as crosses.
fn band_diagram(k: &[f64], bands: &[Vec<f64>], guided: &[(f64, f64, f64)], gap: Option<(f64, f64)>) -> Result<Vec<u8>> {
    let (w, h) = (256usize, 384usize);
    let wmax = bands.iter().flatten().copied().fold(0.0, f64::max).max(1e-9) * 1.05;
    let mut img = vec![0.0; w * h];
    let px = |kv: f64| ((kv / 0.5) * (w - 1) as f64).round().clamp(0.0, (w - 1) as f64) as usize;
    let py = |om: f64| (h - 1) - ((om / wmax) * (h - 1) as f64).round().clamp(0.0, (h - 1) as f64) as usize;
    if let Some((lo, hi)) = gap {
        for y in py(hi)..=py(lo) {
            for x in 0..w {
                img[y * w + x] = 0.25;
            }
        }
    }
    for (ik, kv) in k.iter().enumerate() {
        for om in &bands[ik] {
            let (x, y) = (px(kv.abs()), py(*om));
            for d in 0..2 {
                for (xx, yy) in [(x + d, y), (x, y + d)] {
                    if xx < w && yy < h {
                        img[yy * w + xx] = 1.0;
                    }
                }
            }
        }
    }
    for &(kv, om, _) in guided {
        let (x, y) = (px(kv.abs()) as i64, py(om) as i64);
        for d in -3..=3i64 {
            for (xx, yy) in [(x + d, y + d), (x + d, y - d)] {
                if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                    img[yy as usize * w + xx as usize] = 0.75;
                }
            }
        }
    }
    Ok(gray_pixmap(w, h, &img, 100.0)?)
}

fn operating_point(ctx: &Ctx, band: &GuidedBand, ng: f64) -> Result<OperatingPoint> {
    Ok(OperatingPoint::at_group_index(band, ng, ctx.cfg.solver.mode_samples)?)
}

fn mode(ctx: &Ctx) -> Result<ExitCode> {
    let g = ctx.geometry()?;
    let band = ctx.band(&g)?;
    let ng = ctx.cfg.study.emit.n_g_target;
    let point = operating_point(ctx, &band, ng)?;
    let m = &point.primary;
    let p0 = pcwbeta::emission::reference_power_with(m.omega, g.index, m.resolution, ctx.cfg.solver.pml)?;
    let r0 = m.axis_antinode();
    let fwg = pcwbeta::emission::purcell_wg(m, r0, Orientation::Y, p0);
    let summary = format!(
        "config_hash {}\nomega {:.8}\nk {:.8}\nn_g {:.6}\nnorm {:.6e}\nantinode {:.6} {:.6}\nfp_wg_y_antinode {:.6}\nguided_modes {}\n",
        ctx.hash,
        m.omega,
        m.k,
        m.n_g,
        m.norm,
        r0.0,
        r0.1,
        fwg,
        point.guided.len()
    );
    print!("{summary}");
    ctx.write("mode_summary.txt", summary.as_bytes())?;
    let h = m.dx();
    let half = (m.ny / 2) as i64;
    if ctx.csv() {
        let mut rows = Vec::with_capacity(m.nx * m.ny);
        for i in 0..m.nx {
            for jj in 0..m.ny {
                let n = i * m.ny + jj;
                let (x, y) = (i as f64 * h, (jj as i64 - half) as f64 * h);
                rows.push(vec![
                    sci(x),
                    sci(y),
                    sci(m.ex[n].re),
                    sci(m.ex[n].im),
                    sci(m.ey[n].re),
                    sci(m.ey[n].im),
                    sci(m.hz[n].re),
                    sci(m.hz[n].im),
                ]);
            }
        }
        let header = ["x", "y", "ex_re", "ex_im", "ey_re", "ey_im", "hz_re", "hz_im"];
        ctx.write("mode.csv", &csv_bytes(&header, rows)?)?;
    }
    if ctx.pnm() {
        // one cell wide, so tile it across five periods
        let periods = 5;
        let (w, hgt) = (m.nx * periods, m.ny);
        let mut v = vec![0.0; w * hgt];
        for row in 0..hgt {
            let jj = m.ny - 1 - row;
            for c in 0..w {
                let i = c % m.nx;
                let (ex, ey) = (m.ex[i * m.ny + jj], m.ey[i * m.ny + jj]);
                v[row * w + c] = (ex.norm_sqr() + ey.norm_sqr()).sqrt();
            }
        }
        ctx.write("mode_e.pgm", &gray_pixmap(w, hgt, &v, DEFAULT_SATURATION)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn emit(ctx: &Ctx) -> Result<ExitCode> {
    let g = ctx.geometry()?;
    let e = &ctx.cfg.study.emit;
    if let Some(r0) = e.position {
        if g.eps_at(r0.0, r0.1) != g.index * g.index {
            bail!("r0 = {r0:?} lies inside a hole; emitters sit in the dielectric");
        }
    }
    let band = ctx.band(&g)?;
    let point = operating_point(ctx, &band, e.n_g_target)?;
    let r0 = e.position.unwrap_or_else(|| point.primary.axis_antinode());
    let study = WaveguideStudy::new(&g, &ctx.cfg.solver.settings(), point)?;
    let run = study.emit(r0, e.orientation)?;
    let rep = &run.report;
    println!(
        "omega {:.6} n_g {:.3} r0 ({:.4}, {:.4}) {}: fp_wg {:.5} fp_rad {:.5e} beta {:.6} beta' {:.6} discrepancy {:.2e}",
        rep.omega,
        rep.n_g,
        r0.0,
        r0.1,
        map::orientation_str(e.orientation),
        rep.fp_wg,
        rep.fp_rad,
        rep.beta,
        rep.beta_prime,
        rep.discrepancy
    );
    if ctx.csv() {
        ctx.write("emission.csv", &reports_csv(std::slice::from_ref(rep), &ctx.hash)?)?;
    }
    let mut extra = vec![
        format!("config_hash {}", ctx.hash),
        format!("boundary {}", ctx.cfg.solver.boundary_mode.as_str()),
        format!("a0 {:.8e}", run.a0),
        format!("phase {:.8}", run.phase),
        format!("guided_flux_right {:.8e}", run.guided_flux.0),
        format!("guided_flux_left {:.8e}", run.guided_flux.1),
        format!("mode_flux_per_side {:.8e}", 0.5 * run.a0 * run.a0 * study.point.primary.norm),
        format!("residual {:.3e}", run.solution.residual),
    ];
    match &run.reflection {
        Some(r) => {
            extra.push(format!("reflection_contrast {:.6e}", r.contrast));
            println!("reflection contrast {:.4e}", r.contrast);
        }
        None => extra.push("reflection_contrast unavailable".into()),
    }
    ctx.write("emission_summary.txt", (extra.join("\n") + "\n").as_bytes())?;
    if ctx.csv() || ctx.pnm() {
        write_field_dump(&run.solution, &ctx.out, "field", DEFAULT_SATURATION)?;
        println!("wrote field dump to {}", ctx.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_map(ctx: &Ctx) -> Result<ExitCode> {
    let g = ctx.geometry()?;
    let band = ctx.band(&g)?;
    let spec = &ctx.cfg.study.map;
    let records_path = ctx.out.join("map_records.jsonl");
    let done = load_records(&records_path)?;
    if !done.is_empty() {
        println!("resuming from {} stored cells", done.len());
    }
    let log = RecordLog::open(Some(&records_path))?;
    let mut all = Vec::new();
    for &ng in &spec.ng_targets {
        let point = operating_point(ctx, &band, ng)?;
        let study = WaveguideStudy::new(&g, &ctx.cfg.solver.settings(), point)?;
        let recs = map_operating_point(spec, &study, ng, &done, &log)?;
        println!("n_g {ng}: {} cells", recs.len());
        all.extend(recs);
    }
    if ctx.csv() {
        ctx.write("map.csv", &map::map_csv(&all)?)?;
    }
    if ctx.pnm() {
        for &ng in &spec.ng_targets {
            for &o in &spec.orientations {
                let r = map::raster(spec, &all, ng, o);
                let (ppm, side) = map::render(spec, &r)?;
                let stem = format!("map_{}_ng{}_{}", spec.quantity.as_str(), ng, map::orientation_str(o));
                ctx.write(&format!("{stem}.ppm"), &ppm)?;
                ctx.write(&format!("{stem}.scale.json"), serde_json::to_string_pretty(&side)?.as_bytes())?;
                println!("{stem}: mirror asymmetry {:.3e}", map::mirror_asymmetry(spec, &r));
            }
        }
    }
    let failed = all.iter().filter(|r| r.status == CellStatus::Failed).count();
    if failed > 0 {
        eprintln!("{failed} map cells failed; see map.csv");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn converge(ctx: &Ctx) -> Result<ExitCode> {
    let g = ctx.geometry()?;
    if ctx.cfg.geometry.structure != Structure::W1 {
        bail!("convergence sweeps need geometry.structure = \"w1\"");
    }
    let gap = ctx.gap(&g)?;
    let spec = &ctx.cfg.study.convergence;
    let report = convergence_sweep(spec, &g, &ctx.cfg.solver.settings(), gap)?;
    for p in &report.points {
        println!("{} = {}: target {:.6e}", spec.parameter.as_str(), p.value, p.target);
    }
    match report.plateau_from {
        Some(v) => println!(
            "plateau from {} = {v} (spread {:.2}%)",
            spec.parameter.as_str(),
            100.0 * report.fluctuation
        ),
        None => println!(
            "no plateau within {:.1}%; flagged for review (last spread {:.2}%)",
            100.0 * spec.tolerance,
            100.0 * report.fluctuation
        ),
    }
    if ctx.csv() {
        ctx.write("convergence.csv", &convergence_csv(&report)?)?;
    }
    ctx.write("convergence.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn phc(ctx: &Ctx, with_map: bool, with_scan: bool) -> Result<ExitCode> {
    let g = ctx.geometry()?;
    if !g.has_holes() {
        bail!("phc-rad needs a photonic crystal");
    }
    let gap = ctx.gap(&g)?;
    let spec = &ctx.cfg.study.phc;
    let mut settings = ctx.cfg.solver.settings();
    settings.boundary = BoundaryMode::PmlOnly;
    let d = phc_rad_map(spec, &g, &settings, gap, with_map, with_scan)?;
    println!("gap {:.6} {:.6}, map at omega {:.6}", gap.0, gap.1, d.omega);
    if with_map {
        if let Some(m) = d.map_minimum() {
            println!("map minimum fp_rad {m:.4e}");
        }
        if ctx.csv() {
            ctx.write("phc_map.csv", &rad_csv(&d.map)?)?;
        }
        if ctx.pnm() {
            phc_rasters(ctx, spec.grid, &spec.orientations, &d.map)?;
        }
    }
    if with_scan {
        for (w, _, o, s) in &d.scan {
            if let Ok(s) = s {
                println!("omega {w:.4} {}: fp_rad {:.4e}", map::orientation_str(*o), s.fp_rad);
            }
        }
        if ctx.csv() {
            ctx.write("phc_scan.csv", &rad_csv(&d.scan)?)?;
        }
    }
    let failed = d.map.iter().chain(&d.scan).filter(|r| matches!(&r.3, Err(e) if e != "hole")).count();
    if failed > 0 {
        eprintln!("{failed} emitters failed; see the CSV status column");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn phc_rasters(ctx: &Ctx, grid: (usize, usize), orientations: &[Orientation], rows: &[RadRow]) -> Result<()> {
    let (nx, ny) = grid;
    for &o in orientations {
        let mut values = vec![None; nx * ny];
        let cells = map::MapSpec { grid, ..Default::default() }.positions();
        let slice: Vec<&RadRow> = rows.iter().filter(|r| r.2 == o).collect();
        for ((ix, iy, _, _), r) in cells.iter().zip(slice) {
            values[(ny - 1 - iy) * nx + ix] = r.3.as_ref().ok().map(|s| s.fp_rad.max(1e-300).log10());
        }
        let finite: Vec<f64> = values.iter().flatten().copied().collect();
        let scale = ColorScale {
            min: finite.iter().copied().fold(f64::INFINITY, f64::min),
            max: finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            nonlinear: false,
        };
        let stem = format!("phc_map_{}", map::orientation_str(o));
        ctx.write(&format!("{stem}.ppm"), &color_pixmap(nx, ny, &values, &scale, 8, &[])?)?;
        let side = serde_json::json!({
            "quantity": "log10_fp_rad",
            "min": scale.min,
            "max": scale.max,
            "colormap": "viridis",
            "nonlinear": false,
        });
        ctx.write(&format!("{stem}.scale.json"), serde_json::to_string_pretty(&side)?.as_bytes())?;
    }
    Ok(())
}
