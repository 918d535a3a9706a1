use pyo3::prelude::*;
use pyo3::py_run;

#[test]
fn module_runs_from_python() {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(hyperion::hyperion)(py);
        py_run!(
            py,
            m,
            r#"
p = m.SystemParams(0.5, 0.1, 0.05)
s = m.InitialState(10.0, 0.5)
psi = m.QuantumState(s, p)
later, obs = psi.evolve(p, 0.2, record_at=[0.1, 0.2])
assert len(obs["mean_jz"]) == 2
assert abs(later.norm_sqr() - 1.0) < 1e-9
ens = m.Ensemble(s, p, 500, 1)
_, cl = ens.evolve(p, 0.2, record_at=[0.2])
assert abs(cl["mean_jz"][0] - obs["mean_jz"][1]) < 0.2
h = ens.histogram(0.05, 400)
assert abs(h.total() - 1.0) < 1e-12
assert "chaotic_means" in m.preset_names()
"#
        );
    });
}

#[test]
fn invalid_parameters_raise_value_error() {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(hyperion::hyperion)(py);
        py_run!(
            py,
            m,
            r#"
try:
    m.InitialState(10.0, -1.0)
    raise AssertionError("accepted a negative width")
except ValueError:
    pass
try:
    m.fit_power_law([1.0], [1.0])
    raise AssertionError("fit of one point")
except m.HyperionError:
    pass
"#
        );
    });
}
