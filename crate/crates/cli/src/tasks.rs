//! Experiment drivers.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use deeptv::energy::Problem;
use deeptv::forwardops::{gaussian_kernel, ForwardOp, Kernel};
use deeptv::imaging::{add_gaussian_noise, add_salt_pepper, metrics, render_fine, Image};
use deeptv::netgrad::{init_params, write_checkpoint};
use deeptv::optimize::{solve_fd, train_with, TrainConfig, TrainEvent, TrainState};
use deeptv::oracles::{
    disk_field, disk_solution, error_estimate, step1d_solution, step_field, step_observation, DiskParams, Step1DParams,
};
use deeptv::{Boundary, Field, Grid, NetworkSpec, ParamVector};

use crate::config::{RunConfig, Task};
use crate::output::{emit_plots, write_csv, write_history, write_metadata, write_metrics, Timing};

/// Headline numbers of a finished run, in the order they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub values: Vec<(String, f64)>,
}

impl RunReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

/// Runs `cfg.task`, writing every artifact under `cfg.out`.
pub fn run_task(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let start = Instant::now();
    let mut run = Run { cfg, dir: cfg.out.clone(), timing: Vec::new(), values: Vec::new() };
    match cfg.task {
        Task::Denoise | Task::Inpaint | Task::Deblur => run.image()?,
        Task::Sweep1d | Task::Sweep2d => run.sweep()?,
        Task::FdBaseline => run.fd_baseline()?,
        Task::ErrorTrack => run.error_track()?,
    }
    if matches!(cfg.task, Task::Sweep1d | Task::Sweep2d | Task::ErrorTrack) {
        emit_plots(&run.dir)?;
    }
    write_metadata(&run.dir, cfg, start.elapsed().as_secs_f64(), &run.timing)?;
    Ok(RunReport { dir: run.dir, values: run.values })
}

struct Run<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    timing: Vec<Timing>,
    values: Vec<(String, f64)>,
}

fn fmt(x: f64) -> String {
    x.to_string()
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn report(&mut self, key: impl Into<String>, value: f64) {
        self.values.push((key.into(), value));
    }

    /// Trains from the seeded initialization, checkpointing the best iterate and
    /// sampling wall time at every logged iteration. `on_event` sees every iterate.
    fn train(
        &mut self,
        label: &str,
        problem: &Problem,
        net: &NetworkSpec,
        config: &TrainConfig,
        mut on_event: impl FnMut(&TrainEvent<'_>) -> deeptv::Result<()>,
    ) -> Result<TrainState> {
        let checkpoint = self.path(&format!("{label}checkpoint.bin"));
        let start = Instant::now();
        let mut timing = Timing { label: format!("{label}train"), samples: Vec::new() };
        let every = config.log_every;
        let last = config.iterations;
        let state = train_with(problem, net, config, init_params(net, config.seed)?, |ev| {
            on_event(ev)?;
            if every > 0 && (ev.iteration % every == 0 || ev.iteration == last) {
                timing.samples.push((ev.iteration, start.elapsed().as_secs_f64() * 1e3));
                let theta = ParamVector::new(net, ev.state.best_theta.clone())?;
                write_checkpoint(BufWriter::new(File::create(&checkpoint)?), net, &theta)?;
            }
            Ok(())
        })
        .with_context(|| format!("training {}", if label.is_empty() { "the network" } else { label }))?;
        self.timing.push(timing);
        write_history(&self.path(&format!("{label}loss.csv")), &state.history)?;
        Ok(state)
    }

    fn step_problem(&self, nodes: usize) -> Result<(Problem, Option<Field>)> {
        let [lo, hi] = self.cfg.data.domain;
        let mid = 0.5 * (lo + hi);
        let grid = Grid::line(lo, hi, nodes, self.cfg.data.bc)?;
        let g = step_observation(&grid, mid);
        let e = &self.cfg.energy;
        // the closed form is for the free-boundary problem with lambda scaled out
        let exact = if self.cfg.data.bc == Boundary::Neumann && e.lambda > 0.0 && e.alpha2 > 0.0 {
            let p = Step1DParams { l_ell: mid - lo, l_u: hi - mid, alpha1: e.alpha1 / e.lambda, alpha2: e.alpha2 / e.lambda };
            let (c1, c2) = step1d_solution(&p)?;
            Some(step_field(&grid, mid, c1, c2))
        } else {
            None
        };
        Ok((Problem::new(e.clone(), g, ForwardOp::Identity)?, exact))
    }

    fn disk_problem(&self, nodes: usize) -> Result<(Problem, Option<Field>)> {
        let grid = Grid::unit_square(nodes, nodes, self.cfg.data.bc)?;
        let r = self.cfg.data.disk_radius;
        let g = disk_field(&grid, (0.5, 0.5), r, 1.0);
        let e = &self.cfg.energy;
        // zero extension outside the square mimics the plane
        let exact = (self.cfg.data.bc == Boundary::Dirichlet).then(|| {
            let a = disk_solution(&DiskParams { radius: r, alpha1: e.alpha1, alpha2: e.alpha2, lambda: e.lambda });
            disk_field(&grid, (0.5, 0.5), r, a)
        });
        Ok((Problem::new(e.clone(), g, ForwardOp::Identity)?, exact))
    }

    fn sweep(&mut self) -> Result<()> {
        let net = self.cfg.network_spec()?;
        let mut rows = Vec::new();
        for (i, rung) in self.cfg.ladder.iter().enumerate() {
            let (problem, exact) = match self.cfg.task {
                Task::Sweep1d => self.step_problem(rung.nodes)?,
                _ => self.disk_problem(rung.nodes)?,
            };
            let mut tc = self.cfg.train_config(Some(rung.c));
            if rung.c == 0.0 {
                // every projected iterate is the zero network
                tc.iterations = 0;
            }
            let label = format!("rung{i}_");
            let state = self.train(&label, &problem, &net, &tc, |_| Ok(()))?;
            let theta = ParamVector::new(&net, state.best_theta.clone())?;
            let u = problem.sample(&net, &theta)?;
            let distance = match &exact {
                Some(x) => metrics(&u, x)?.mean_l1,
                None => f64::NAN,
            };
            self.save_field(&format!("{label}u"), &u, Some(problem.observation()), exact.as_ref())?;
            self.report(format!("energy_{i}"), state.best_loss);
            self.report(format!("distance_{i}"), distance);
            rows.push(vec![
                fmt(rung.c),
                rung.nodes.to_string(),
                fmt(state.best_loss),
                fmt(distance),
                state.best_iteration.to_string(),
            ]);
        }
        write_csv(&self.path("sweep.csv"), &["c", "nodes", "energy", "distance", "best_iteration"], rows)
    }

    /// 1D fields as `x,u[,g][,u_star]` CSV; 2D fields as PNG.
    fn save_field(&self, stem: &str, u: &Field, g: Option<&Field>, exact: Option<&Field>) -> Result<()> {
        if u.grid().dim() == 2 {
            return Ok(Image::from_field(u)?.save(self.path(&format!("{stem}.png")))?);
        }
        let mut header = vec!["x", "u"];
        if g.is_some() {
            header.push("g");
        }
        if exact.is_some() {
            header.push("u_star");
        }
        let grid = u.grid();
        let rows = (0..u.len()).map(|i| {
            let mut row = vec![fmt(grid.coords(i)[0]), fmt(u.values()[i])];
            row.extend(g.map(|g| fmt(g.values()[i])));
            row.extend(exact.map(|x| fmt(x.values()[i])));
            row
        });
        write_csv(&self.path(&format!("{stem}.csv")), &header, rows)
    }

    fn fd_baseline(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let net = cfg.network_spec()?;
        let (problem, _) = self.step_problem(cfg.data.size)?;
        let state = self.train("", &problem, &net, &cfg.train_config(cfg.train.c), |_| Ok(()))?;
        let theta = ParamVector::new(&net, state.best_theta.clone())?;
        let u_nn = problem.sample(&net, &theta)?;
        let u_fd = solve_fd(&problem, &cfg.fd_config()).context("solving the pixel problem")?;

        let grid = problem.grid();
        let rows = (0..grid.len()).map(|i| vec![fmt(grid.coords(i)[0]), fmt(u_nn.values()[i]), fmt(u_fd.values()[i])]);
        write_csv(&self.path("comparison.csv"), &["x", "nn", "fd"], rows)?;

        let linf = u_nn.zip_with(&u_fd, |a, b| a - b)?.max_abs();
        let e_nn = problem.energy_fd(&u_nn)?;
        let e_fd = problem.energy_fd(&u_fd)?;
        // E_theta(u_theta) = E_FD(sample) up to the parameter penalty
        let penalty = problem.spec().alpha_theta * theta.max_abs();
        let identity_gap = (problem.energy_nn(&net, &theta)? - penalty - e_nn).abs();
        let m = [
            ("linf", linf),
            ("energy_nn", e_nn),
            ("energy_fd", e_fd),
            ("energy_gap", (e_nn - e_fd).abs()),
            ("identity_gap", identity_gap),
            ("best_iteration", state.best_iteration as f64),
        ];
        write_metrics(&self.path("metrics.csv"), &m)?;
        for (k, v) in m {
            self.report(k, v);
        }
        Ok(())
    }

    fn error_track(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let net = cfg.network_spec()?;
        let (problem, exact) = self.step_problem(cfg.data.size)?;
        let spec = problem.spec().clone();
        let g = problem.observation().clone();
        let mut rows = Vec::new();
        let state = self.train("", &problem, &net, &cfg.train_config(cfg.train.c), |ev| {
            if !ev.improved {
                return Ok(());
            }
            let theta = ParamVector::new(&net, ev.state.best_theta.clone())?;
            let v = problem.sample(&net, &theta)?;
            let b = error_estimate(&v, &g, &spec, &ForwardOp::Identity)?;
            let err = match &exact {
                Some(x) => metrics(&v, x)?.l2,
                None => f64::NAN,
            };
            rows.push(vec![rows.len().to_string(), fmt(b.rho1), fmt(b.rho2), fmt(b.rho), fmt(err)]);
            Ok(())
        })?;
        write_csv(&self.path("error_track.csv"), &["update", "rho1", "rho2", "rho", "true_error"], rows)?;
        let theta = ParamVector::new(&net, state.best_theta.clone())?;
        let u = problem.sample(&net, &theta)?;
        self.save_field("u", &u, Some(&g), exact.as_ref())?;
        self.report("energy", state.best_loss);
        self.report("updates", state.updates as f64);
        Ok(())
    }

    fn image(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let d = &cfg.data;
        let original = match &d.input {
            Some(path) => Image::load(path).with_context(|| format!("loading {}", path.display()))?.to_field(d.bc)?,
            None => {
                let grid = Grid::unit_square(d.size, d.size, d.bc)?;
                disk_field(&grid, (0.5, 0.5), d.disk_radius, 1.0)
            }
        };
        let grid = original.grid().clone();
        let op = match self.cfg.task {
            Task::Inpaint => ForwardOp::mask(match &d.mask {
                Some(path) => load_mask(path, &grid)?,
                None => default_mask(&grid),
            })?,
            Task::Deblur => ForwardOp::Blur(match &d.kernel {
                Some(path) => Kernel::load(path).with_context(|| format!("loading {}", path.display()))?,
                None => gaussian_kernel(d.blur_size, d.blur_sigma)?,
            }),
            _ => ForwardOp::Identity,
        };
        let mut observed = Image::from_field(&op.apply(&original)?)?;
        if d.noise_sigma > 0.0 {
            observed = add_gaussian_noise(&observed, d.noise_sigma, self.cfg.seed)?;
        }
        if d.sp_prob > 0.0 {
            observed = add_salt_pepper(&observed, d.sp_prob, self.cfg.seed)?;
        }
        let g = Field::new(grid.clone(), observed.values().to_vec())?;
        Image::from_field(&original)?.save(self.path("original.png"))?;
        observed.save(self.path("observation.png"))?;
        if let ForwardOp::Mask(m) = &op {
            Image::from_field(m)?.save(self.path("mask.png"))?;
        }

        let net = cfg.network_spec()?;
        let problem = Problem::new(cfg.energy.clone(), g.clone(), op)?;
        let state = self.train("", &problem, &net, &cfg.train_config(cfg.train.c), |_| Ok(()))?;
        let theta = ParamVector::new(&net, state.best_theta.clone())?;
        let u = problem.sample(&net, &theta)?;
        Image::from_field(&u)?.save(self.path("reconstruction.png"))?;
        let fine = render_fine(&net, &theta, &grid, d.fine_factor)?;
        Image::from_field(&fine)?.save(self.path("reconstruction_fine.png"))?;

        let rec = metrics(&u, &original)?;
        let obs = metrics(&g, &original)?;
        let m = [
            ("energy", state.best_loss),
            ("best_iteration", state.best_iteration as f64),
            ("updates", state.updates as f64),
            ("mean_l1", rec.mean_l1),
            ("l2", rec.l2),
            ("observation_mean_l1", obs.mean_l1),
            ("observation_l2", obs.l2),
        ];
        write_metrics(&self.path("metrics.csv"), &m)?;
        for (k, v) in m {
            self.report(k, v);
        }
        Ok(())
    }
}

/// Keeps everything except a horizontal and a vertical bar, both crossing the
/// disk edge of the synthetic image.
pub fn default_mask(grid: &Grid) -> Field {
    Field::from_fn(grid, |x| {
        let hole = (x[0] - 0.5).abs() < 0.04 || (x[1] - 0.3).abs() < 0.03;
        if hole {
            0.0
        } else {
            1.0
        }
    })
}

fn load_mask(path: &Path, grid: &Grid) -> Result<Field> {
    let img = Image::load(path).with_context(|| format!("loading {}", path.display()))?;
    let shape = grid.shape();
    if [img.height(), img.width()] != shape[..] {
        bail!("mask is {}x{}, image is {}x{}", img.height(), img.width(), shape[0], shape[1]);
    }
    Ok(Field::new(grid.clone(), img.values().iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect())?)
}
