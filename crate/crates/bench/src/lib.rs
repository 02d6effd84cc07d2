//! Shared fixtures for the solver benchmarks.

use predprey_core::lyapunov::sigma_fits;
use predprey_core::{
    ControllerSpec, GainsA, GainsB, IcShape, IcSpec, LyapConfig, Plant, SimConfig,
};

pub const U_STAR: f64 = 0.15;

pub fn plant(n_cells: usize) -> Plant {
    Plant::reference(n_cells, U_STAR).expect("reference plant builds")
}

pub fn control_a() -> ControllerSpec {
    ControllerSpec::A(GainsA::new(0.2, 0.6).expect("default gains are admissible"))
}

pub fn control_b(p: &Plant) -> ControllerSpec {
    ControllerSpec::B(GainsB::new(0.01, 0.13, 0.2, &p.eq).expect("default gains are admissible"))
}

/// Control A from the FQ start over `t_final`, optionally tracking the Lyapunov functional.
pub fn fq_run(p: &Plant, t_final: f64, lyapunov: bool) -> SimConfig {
    let ctrl = control_a();
    let mut cfg = SimConfig::new(t_final, ctrl, IcSpec::new(IcShape::Fq));
    if lyapunov {
        cfg.lyap = Some(lyap_a(p));
    }
    cfg
}

pub fn lyap_a(p: &Plant) -> LyapConfig {
    let fits = sigma_fits(&p.eq).expect("sigma fits");
    let ControllerSpec::A(g) = control_a() else {
        unreachable!()
    };
    LyapConfig::for_control_a(&g, &p.eq, &fits).expect("control A configuration")
}

pub fn lyap_b(p: &Plant) -> LyapConfig {
    let fits = sigma_fits(&p.eq).expect("sigma fits");
    let ControllerSpec::B(g) = control_b(p) else {
        unreachable!()
    };
    LyapConfig::for_control_b(&g, &p.eq, &fits).expect("control B configuration")
}
