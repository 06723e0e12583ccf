import hashlib
import math

import numpy as np
import pytest

from accelmin.bench.cli import main as cli_main
from accelmin.bench.config import ConfigError, parse_config_text
from accelmin.bench.runner import (
    CSV_COLUMNS,
    build_problem,
    parse_facts,
    read_trace_csv,
    run_experiment,
    verify_certificates,
    write_trace_csv,
)
from accelmin.bench.svgplot import emit_plot
from accelmin.core import TraceRecord

QUAD_CONFIG = """
[problem]
family = split_quadratic
dim = 12
kappa = 40
kappa1 = 4
kappa2 = 4
seed = 3

[run]
max_iters = 40
output_dir = out

[method agm]
kind = agmsdr
variant = known_L

[method agm_ls]
kind = agmsdr
variant = linesearch

[method aam]
kind = aam
mode = adaptive
mu = 0.0
"""

EOT_CONFIG = """
[problem]
family = eot
n = 12
gamma = 1.0
cost_scale = 40
seed = 1

[run]
max_iters = 60
call_budget = 90
output_dir = out

[method aam]
kind = aam

[method sinkhorn]
kind = sinkhorn

[method catalyst]
kind = catalyst
inner_budget = 1500
"""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_defaults_and_sections():
    cfg = parse_config_text(QUAD_CONFIG)
    assert cfg.problem.family == "split_quadratic"
    assert cfg.problem.dim == 12
    assert cfg.run.grad_tol_rel == 1e-9  # default
    assert [m.name for m in cfg.methods] == ["agm", "agm_ls", "aam"]
    assert cfg.methods[0].variant == "known_L"


def test_zero_methods_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[problem]\nfamily = eot\n")


@pytest.mark.parametrize("text", [
    "[method m]\nkind = sgd\n",                       # unknown kind
    "[method m]\nkind = aam\nmode = cyclic\n",        # unknown mode
    "[method m]\nkind = aam\nbogus = 1\n",            # unknown key
    "[mystery]\nx = 1\n[method m]\nkind = aam\n",     # unknown section
    "[problem]\nfamily = lasso\n[method m]\nkind = aam\n",
    "[run]\nx_axis = time\n[method m]\nkind = aam\n",
    "[method m]\nkind = aam\n[method m]\nkind = aam\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_bool_coercion():
    cfg = parse_config_text("[run]\ncertificates = off\n[method m]\nkind = aam\n")
    assert cfg.run.certificates is False


# ---------------------------------------------------------------------------
# experiment runs
# ---------------------------------------------------------------------------


def test_quadratic_experiment_artifacts_and_certificates(tmp_path, monkeypatch):
    monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(tmp_path))
    cfg = parse_config_text(QUAD_CONFIG)
    art = run_experiment(cfg)
    assert art.ok
    assert not art.f_star_is_proxy
    assert art.out_dir == tmp_path / "out"
    for name in ("agm", "agm_ls", "aam"):
        path = art.trace_csvs[name]
        assert path.exists()
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) > 1
    assert art.cert_csv.exists()
    assert art.svg_path.exists()
    assert (art.out_dir / "config.ini").read_text() == cfg.raw_text
    # traces strictly decreasing in f
    for name in ("agm", "agm_ls", "aam"):
        trace = read_trace_csv(art.trace_csvs[name])
        fvals = [rec.f_val for rec in trace]
        assert all(b <= a + 1e-12 for a, b in zip(fvals, fvals[1:]))
    # every certificate that ran has passed (none skipped for quadratics
    # except the runtime-only ones, none failed)
    for cert in art.cert_results:
        assert cert.passed is not False, (cert.name, cert.detail)
    names = {(c.method, c.name) for c in art.cert_results}
    assert ("aam", "ak_growth") in names
    assert ("aam", "main_theorem") in names
    assert ("agm", "rate_envelope") in names
    assert ("agm", "estimate_sequence") in names


def test_byte_identical_reruns(tmp_path, monkeypatch):
    cfg = parse_config_text(QUAD_CONFIG)

    def digest(root):
        monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(root))
        art = run_experiment(cfg)
        out = {}
        for name, path in art.trace_csvs.items():
            out[name] = hashlib.sha256(path.read_bytes()).hexdigest()
        out["svg"] = hashlib.sha256(art.svg_path.read_bytes()).hexdigest()
        out["certs"] = hashlib.sha256(art.cert_csv.read_bytes()).hexdigest()
        return out

    d1 = digest(tmp_path / "a")
    d2 = digest(tmp_path / "b")
    assert d1 == d2


def test_eot_experiment_uses_proxy_and_skips_gap_certificates(tmp_path, monkeypatch):
    monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(tmp_path))
    cfg = parse_config_text(EOT_CONFIG)
    art = run_experiment(cfg)
    assert art.ok, [(c.name, c.detail) for c in art.cert_results if c.passed is False]
    assert art.f_star_is_proxy
    aam_results = {c.name: c for c in art.cert_results if c.method == "aam"}
    assert aam_results["main_theorem"].passed is None  # skipped: no true optimum
    assert aam_results["estimate_sequence"].passed is True
    cat = {c.name: c for c in art.cert_results if c.method == "catalyst"}
    assert cat["coefficient_identity"].passed is True
    assert cat["ms_condition"].passed is True


def test_method_error_recorded_not_fatal(tmp_path, monkeypatch):
    monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(tmp_path))
    # catalyst with an impossible inner budget at a pinned prox weight fails;
    # the sinkhorn method still runs
    text = EOT_CONFIG.replace("inner_budget = 1500",
                              "inner_budget = 1\nL_d = 1.0\nL0 = 1.0\nL_u = 1.0")
    cfg = parse_config_text(text)
    art = run_experiment(cfg)
    errors = {r.name: r.error for r in art.method_results}
    assert errors["catalyst"] is not None
    assert errors["sinkhorn"] is None
    assert not art.ok


def test_family_method_compatibility(tmp_path, monkeypatch):
    monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(tmp_path))
    cfg = parse_config_text(
        "[problem]\nfamily = split_quadratic\ndim = 8\nkappa = 10\n"
        "kappa1 = 2\nkappa2 = 2\n[method s]\nkind = sinkhorn\n")
    with pytest.raises(ConfigError):
        run_experiment(cfg)


# ---------------------------------------------------------------------------
# trace CSV round trip and verification
# ---------------------------------------------------------------------------


def _fake_record(k, **kw):
    base = dict(k=k, f_val=1.0 / k, grad_norm_sq=1.0 / k ** 2, A_k=float(k),
                a_k=1.0, tau_k=1.0, L_hat=2.0, value_calls=3 * k,
                grad_calls=k, block_min_calls=0, wall_time=0.1 * k)
    base.update(kw)
    return TraceRecord(**base)


def test_trace_csv_roundtrip(tmp_path):
    trace = [_fake_record(k) for k in range(1, 6)]
    path = tmp_path / "t.csv"
    write_trace_csv(path, trace, f_star=0.0, timing=True)
    back = read_trace_csv(path)
    for a, b in zip(trace, back):
        assert (a.k, a.f_val, a.A_k, a.a_k, a.L_hat) == \
            (b.k, b.f_val, b.A_k, b.a_k, b.L_hat)
        assert b.wall_time == a.wall_time


def test_trace_csv_zeroes_wall_time_by_default(tmp_path):
    trace = [_fake_record(1)]
    path = tmp_path / "t.csv"
    write_trace_csv(path, trace, f_star=0.0)
    assert read_trace_csv(path)[0].wall_time == 0.0


def test_verify_certificates_fault_injection(tmp_path):
    cfg = parse_config_text(QUAD_CONFIG)
    oracle = build_problem(cfg.problem)
    from accelmin.aam import run_aam
    x0 = np.zeros(oracle.dim)
    _, trace = run_aam(oracle, x0, mode="known_L", L=oracle.known_L, max_iters=25)
    facts = {"kind": "aam", "n": 2, "L": oracle.known_L, "mu_solver": 0.0,
             "R": float(np.linalg.norm(x0 - oracle.solution())),
             "f_star": oracle.f_star(), "f0": oracle.value(x0),
             "mu_true": oracle.known_mu}
    results = {c.name: c for c in verify_certificates(trace, facts)}
    assert results["ak_growth"].passed is True
    # corrupt the accumulator: growth certificate must fail with a violation
    trace[10].A_k *= 0.5
    bad = {c.name: c for c in verify_certificates(trace, facts)}
    assert bad["ak_growth"].passed is False
    assert bad["ak_growth"].max_violation > 0


def test_facts_file_parsing(tmp_path):
    path = tmp_path / "facts.txt"
    path.write_text("# quadratic facts\nkind = aam\nn = 2\nL = 12.5\n"
                    "f_star = 0.0 ; known optimum\n")
    facts = parse_facts(path)
    assert facts == {"kind": "aam", "n": 2, "L": 12.5, "f_star": 0.0}


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def test_plot_single_point_trace(tmp_path):
    trace = [_fake_record(1)]
    path = tmp_path / "one.svg"
    emit_plot({"m": trace}, path, f_star=0.0)
    text = path.read_text()
    assert text.startswith("<svg")
    assert "circle" in text


def test_plot_two_curves_with_legend(tmp_path):
    t1 = [_fake_record(k, f_val=2.0 ** -k) for k in range(1, 8)]
    t2 = [_fake_record(k, f_val=3.0 * 2.0 ** -k) for k in range(1, 8)]
    path = tmp_path / "two.svg"
    emit_plot({"fast": t1, "slow": t2}, path, f_star=0.0)
    text = path.read_text()
    assert text.count("<polyline") == 2
    assert ">fast<" in text and ">slow<" in text


def test_plot_axes_variants(tmp_path):
    trace = [_fake_record(k) for k in range(1, 6)]
    for x_axis in ("oracle_calls", "iteration"):
        for y_axis in ("gap", "grad_norm"):
            path = tmp_path / f"{x_axis}_{y_axis}.svg"
            emit_plot({"m": trace}, path, x_axis=x_axis, y_axis=y_axis, f_star=0.0)
            assert path.read_text().startswith("<svg")


def test_plot_bytes_deterministic(tmp_path):
    trace = [_fake_record(k) for k in range(1, 9)]
    p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_plot({"m": trace}, p1, f_star=0.0)
    emit_plot({"m": trace}, p2, f_star=0.0)
    assert p1.read_bytes() == p2.read_bytes()


def test_plot_requires_nonempty(tmp_path):
    with pytest.raises(ValueError):
        emit_plot({}, tmp_path / "x.svg")
    with pytest.raises(ValueError):
        emit_plot({"m": []}, tmp_path / "y.svg")


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_run_and_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(tmp_path))
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(QUAD_CONFIG)
    assert cli_main(["run", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "result: OK" in out


def test_cli_run_bad_config(tmp_path, capsys):
    cfg_path = tmp_path / "bad.ini"
    cfg_path.write_text("[problem]\nfamily = eot\n")
    assert cli_main(["run", str(cfg_path)]) == 2


def test_cli_verify(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BENCH_OUTPUT_ROOT", str(tmp_path))
    cfg = parse_config_text(QUAD_CONFIG)
    art = run_experiment(cfg)
    oracle = build_problem(cfg.problem)
    x0 = np.zeros(oracle.dim)
    facts_path = tmp_path / "facts.txt"
    facts_path.write_text(
        f"kind = aam\nn = 2\nL = {oracle.known_L!r}\nmu_solver = 0.0\n"
        f"mu_true = {oracle.known_mu!r}\n"
        f"R = {float(np.linalg.norm(x0 - oracle.solution()))!r}\n"
        f"f_star = {oracle.f_star()!r}\nf0 = {oracle.value(x0)!r}\n")
    rc = cli_main(["verify", str(art.trace_csvs["aam"]), str(facts_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "ak_growth: PASS" in out
    assert "estimate_sequence: SKIP" in out  # runtime-only data absent in CSV


def test_cli_list_problems(capsys):
    assert cli_main(["list-problems"]) == 0
    out = capsys.readouterr().out
    for fam in ("quadratic", "split_quadratic", "eot"):
        assert fam in out
