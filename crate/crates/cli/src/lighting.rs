use std::path::PathBuf;

use anyhow::{bail, Context};
use shadv::lighting::preetham::{fit_skylight, FitOptions};
use shadv::lighting::skylight::{sha256_hex, BUNDLED_FIT_SHA256};
use shadv::lighting::{project_environment, skylight_sh, skylight_sh_grad, EnvMap, SkylightFit, SkylightParams};

use crate::{Globals, Outcome};

#[derive(clap::Args)]
pub struct ProjectArgs {
    /// Equirectangular environment map (pfm, ppm or png)
    pub env: PathBuf,
    /// Highest SH band to keep
    #[arg(long, default_value_t = shadv::scene::DEFAULT_ENV_BANDS)]
    pub bands: usize,
    /// Output file name inside the output directory
    #[arg(long, default_value = "lighting.shc")]
    pub name: String,
}

pub fn project(g: &Globals, a: ProjectArgs) -> anyhow::Result<Outcome> {
    let env = EnvMap::load(&a.env).with_context(|| format!("loading {}", a.env.display()))?;
    let u = project_environment(&env, a.bands)?;
    let path = g.out_dir()?.join(&a.name);
    u.save(&path).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", u.to_text());
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Ok)
}

#[derive(clap::Args)]
pub struct SkylightArgs {
    /// Sun zenith angle in radians, [0, π/2]
    #[arg(long, required_unless_present = "regenerate_fit")]
    pub theta_s: Option<f64>,
    /// Sun azimuth in radians
    #[arg(long, default_value_t = 0.0)]
    pub phi_s: f64,
    /// Atmospheric turbidity
    #[arg(long, default_value_t = 3.0)]
    pub turbidity: f64,
    /// Coefficient table to use instead of the bundled one
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Also write the partial derivatives as JSON
    #[arg(long)]
    pub grad: bool,
    /// Refit the coefficient table from the sky model and write it out
    #[arg(long, conflicts_with_all = ["theta_s", "fit", "grad"])]
    pub regenerate_fit: bool,
}

pub fn skylight(g: &Globals, a: SkylightArgs) -> anyhow::Result<Outcome> {
    let out = g.out_dir()?;
    if a.regenerate_fit {
        let report = fit_skylight(FitOptions::default());
        let path = out.join("preetham_sh.psky");
        report.fit.save(&path)?;
        let sha = sha256_hex(&report.fit.to_bytes());
        println!("wrote {}", path.display());
        println!("sha256 {sha}");
        println!("rms residual {:.3e} (targets up to {:.3e})", report.rms_residual, report.max_target);
        println!("matches bundled table: {}", sha == BUNDLED_FIT_SHA256);
        return Ok(Outcome::Ok);
    }
    let Some(theta_s) = a.theta_s else { bail!("--theta-s is required") };
    let params = SkylightParams::new(theta_s, a.phi_s, a.turbidity)?;
    let fit = match &a.fit {
        Some(p) => SkylightFit::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SkylightFit::bundled()?,
    };
    let u = skylight_sh(&params, &fit)?;
    let path = out.join("skylight.shc");
    u.save(&path)?;
    print!("{}", u.to_text());
    if a.grad {
        let d = skylight_sh_grad(&params, &fit)?;
        let json = serde_json::json!({
            "theta_s": params.theta_s,
            "phi_s": params.phi_s,
            "turbidity": params.turbidity,
            "d_theta_s": d.d_theta_s.data(),
            "d_phi_s": d.d_phi_s.data(),
            "d_turbidity": d.d_turbidity.data(),
        });
        let gpath = out.join("skylight_grad.json");
        std::fs::write(&gpath, serde_json::to_string_pretty(&json)?)?;
        eprintln!("wrote {}", gpath.display());
    }
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Ok)
}
