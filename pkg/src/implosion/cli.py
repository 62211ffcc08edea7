"""Command line entry point: ``implosion <command> [options]``.

Exit codes: 0 ok, 1 usage error, 2 a numeric certificate failed,
3 two independent computations disagreed.
"""

from __future__ import annotations

import configparser
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import evolution, exponents, fields, origin_series, profile_ode, spectra, tail
from .exponents import GasParams, compute_exponents, parse_gamma

SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_CERT, EXIT_INTERNAL = 0, 1, 2, 3


class CertificateFailure(RuntimeError):
    pass


# run configs -----------------------------------------------------------------

@dataclass
class RunConfig:
    """Parameters plus free-form per-command sections, stored as an INI file."""

    params: GasParams
    sections: dict = field(default_factory=dict)
    out: str = "out"

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["params"] = {"d": str(self.params.d), "gamma": str(self.params.gamma), "N": str(self.params.N)}
        cp["output"] = {"dir": self.out}
        for name, sec in self.sections.items():
            cp[name] = {k: str(v) for k, v in sec.items()}
        buf = io.StringIO()
        buf.write(f"# schema {SCHEMA_VERSION}\n")
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_string(text)
        p = cp["params"]
        params = GasParams(int(p["d"]), parse_gamma(p["gamma"]), int(p.get("N", "1")))
        out = cp["output"]["dir"] if cp.has_section("output") else "out"
        sections = {s: dict(cp[s]) for s in cp.sections() if s not in ("params", "output")}
        return cls(params, sections, out)


# shared options ------------------------------------------------------------------

def _gamma(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_gamma(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise click.BadParameter(str(exc)) from exc


def param_options(f):
    f = click.option("--N", "N", type=click.IntRange(1, None), default=1, show_default=True)(f)
    f = click.option("--gamma", callback=_gamma, default=None, help="adiabatic exponent, e.g. 5/3")(f)
    f = click.option("--d", type=click.IntRange(1, 3), default=None, help="space dimension (1-3)")(f)
    f = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)(f)
    return f


def _params(d, gamma, N, config) -> tuple[GasParams, RunConfig | None]:
    cfg = None
    if config:
        cfg = RunConfig.from_text(Path(config).read_text())
        d = cfg.params.d if d is None else d
        gamma = cfg.params.gamma if gamma is None else gamma
        N = cfg.params.N if N == 1 and cfg.params.N != 1 else N
    if d is None or gamma is None:
        raise click.UsageError("--d and --gamma are required (or a --config with [params])")
    try:
        return GasParams(d, gamma, N), cfg
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


def _outdir(out: str | None, cfg: RunConfig | None) -> Path:
    path = Path(out or (cfg.out if cfg else "out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps({"schema": SCHEMA_VERSION, **payload}, indent=2, default=_jsonable))


def _csv(path: Path, text: str) -> None:
    path.write_text(f"# schema,{SCHEMA_VERSION}\n{text}")


def _jsonable(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


@click.group()
def cli():
    """Self-similar implosion profiles, their spectra and their stability."""


# exponents -------------------------------------------------------------------------

@cli.command("exponents")
@param_options
@click.option("--sweep", default=None, help="range of N, e.g. 1..20")
@click.option("--gamma-kin", "gamma_kin", type=float, multiple=True, help="kinetic-theory exponent to test")
@click.option("--out", default=None, help="write exponents.json / sweep.csv here")
def cmd_exponents(d, gamma, N, config, sweep, gamma_kin, out):
    params, cfg = _params(d, gamma, N, config)
    e = compute_exponents(params)
    rec = e.as_record()
    for k, v in rec.items():
        click.echo(f"{k} = {v}")
    lim = exponents.limit_exponents(params.d, params.gamma)
    click.echo(f"c_r(N->inf) = {lim.c_r:.6f}")
    click.echo(f"c_b(N->inf) = {lim.c_b:.6f}")
    kin = {}
    for g in gamma_kin:
        try:
            ok, margin = exponents.kinetic_admissible(params, g)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        kin[str(g)] = {"admissible": ok, "margin": margin}
        click.echo(f"gamma_kin = {g}: admissible: {str(ok).lower()} (margin {margin:.6g})")
    if out is not None or cfg is not None:
        path = _outdir(out, cfg)
        _dump(path / "exponents.json", {"exponents": rec, "kinetic": kin})
        if sweep:
            lo, hi = (int(x) for x in sweep.split(".."))
            _csv(path / "sweep.csv", exponents.exponent_sweep(params.d, params.gamma, range(lo, hi + 1)).to_csv())
    elif sweep:
        lo, hi = (int(x) for x in sweep.split(".."))
        click.echo(exponents.exponent_sweep(params.d, params.gamma, range(lo, hi + 1)).to_csv(), nl=False)


# profile -----------------------------------------------------------------------------

def build_pipeline(params: GasParams, R_max: float, rtol: float = 1e-10, atol: float = 1e-11):
    e = compute_exponents(params)
    series = origin_series.solve_recursion(e)
    table = profile_ode.integrate_profile(e, series, R_max=R_max, rtol=rtol, atol=atol)
    entropy = tail.build_entropy(table)
    ts = tail.fit_tail(table, entropy=entropy, strict=False)
    certs = tail.verify_v1_certificates(table, e, v1=ts.v1)
    return e, series, table, entropy, ts, certs


@cli.command("profile")
@param_options
@click.option("--rmax", type=float, default=1e4, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True, help="relative tolerance (absolute is tol/10)")
@click.option("--out", default=None)
@click.option("--fixed-point-only", is_flag=True, help="only print the constants at R = 0")
def cmd_profile(d, gamma, N, config, rmax, tol, out, fixed_point_only):
    params, cfg = _params(d, gamma, N, config)
    if fixed_point_only:
        e = compute_exponents(params)
        for k in ("c_r", "c_u", "c_b", "kappa", "v0", "q0", "h0"):
            click.echo(f"{k} = {getattr(e, k)!r}")
        return
    if cfg and "profile" in cfg.sections:
        rmax = float(cfg.sections["profile"].get("rmax", rmax))
        tol = float(cfg.sections["profile"].get("tol", tol))
    e, series, table, entropy, ts, certs = build_pipeline(params, rmax, tol, tol / 10)
    path = _outdir(out, cfg)
    _csv(path / "profile.csv", table.to_csv())
    _csv(path / "entropy.csv", entropy.to_csv())
    _dump(path / "series.json", json.loads(series.to_json()))
    ok = table.all_certified() and ts.q1 > 0 and certs.lower_ok and certs.profile_above_line
    if e.N == 1:
        ok = ok and ts.v1 < 0
    _dump(path / "tail.json", {
        "v1": ts.v1, "q1": ts.q1, "h1": ts.h1, "drift": ts.drift, "beta": ts.beta,
        "certificates": certs.as_dict(), "profile_certified": table.all_certified(),
    })
    click.echo(f"c_r = {e.c_r:.12g}  v1 = {ts.v1:.10g}  q1 = {ts.q1:.10g}  h1 = {ts.h1:.10g}")
    click.echo(f"certificates: {'pass' if ok else 'FAIL'}  (v1 branch: {certs.branch})")
    if not ok:
        raise CertificateFailure("profile certificates failed")


# snapshot -----------------------------------------------------------------------------

def _svg_plot(series: dict, title: str) -> str:
    """Minimal log-log line plot; ``series`` maps label -> (x, y)."""
    W, H, pad = 640, 420, 50
    xs = np.concatenate([np.log10(x[(x > 0) & (y > 0)]) for x, y in series.values()])
    ys = np.concatenate([np.log10(y[(x > 0) & (y > 0)]) for x, y in series.values()])
    x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
    sx = lambda v: pad + (v - x0) / (x1 - x0 or 1) * (W - 2 * pad)
    sy = lambda v: H - pad - (v - y0) / (y1 - y0 or 1) * (H - 2 * pad)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
           f'<text x="{W / 2}" y="20" text-anchor="middle">{title}</text>',
           f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>']
    for i, (label, (x, y)) in enumerate(series.items()):
        m = (x > 0) & (y > 0)
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(np.log10(x[m]), np.log10(y[m])))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        out.append(f'<text x="{W - pad - 5}" y="{pad + 15 * (i + 1)}" text-anchor="end" fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out)


@cli.command("snapshot")
@param_options
@click.option("--times", default="-1,-0.1,-0.01,-0.001", show_default=True)
@click.option("--rmax", type=float, default=1e4, show_default=True)
@click.option("--out", default=None)
@click.option("--plot", is_flag=True, help="also write SVG line plots")
def cmd_snapshot(d, gamma, N, config, times, rmax, out, plot):
    params, cfg = _params(d, gamma, N, config)
    try:
        ts_list = [float(t) for t in times.split(",")]
    except ValueError as exc:
        raise click.UsageError(f"bad --times: {exc}") from exc
    if any(not (-1 <= t < 0) for t in ts_list):
        raise click.UsageError("times must lie in [-1, 0)")
    e, series, table, entropy, tl, certs = build_pipeline(params, rmax)
    path = _outdir(out, cfg)
    r = fields.default_r_grid()
    snaps = []
    for t in ts_list:
        s = fields.snapshot(table, entropy, e, t, r, tail=tl)
        snaps.append(s)
        _csv(path / f"snapshot_t{t:+.0e}.csv", s.to_csv())
    lim = fields.implosion_limits(e, tl)
    payload = {"limits": lim.as_dict(), "p_at_origin": [float(s.p[0]) for s in snaps]}
    if len(snaps) >= 4:
        fit = fields.blowup_rate_regression(snaps, e)
        payload["rates"] = fit.__dict__
        click.echo(f"max rho slope {fit.rho:.5f} (expected {fit.rho_expected:.5f}); "
                   f"sup p slope {fit.p:.5f} (expected {fit.p_expected:.5f})")
    _dump(path / "snapshot.json", payload)
    if plot:
        for name in ("rho", "p"):
            svg = _svg_plot({f"t={s.t:g}": (s.r, getattr(s, name)) for s in snaps}, name)
            (path / f"{name}.svg").write_text(svg)


# spectra -------------------------------------------------------------------------------

def _gersh_point(p: GasParams):
    n = spectra.stabilization_order(p)
    return [(p, m, spectra.gershgorin_order(p, m)) for m in (n, n + 7)]


@cli.command("spectra")
@param_options
@click.option("--n-max", type=click.IntRange(1, None), default=4, show_default=True)
@click.option("--five-cases", is_flag=True, help="print the dimension table of the special cases")
@click.option("--gershgorin-grid", is_flag=True, help="check the certificate over the full parameter grid")
@click.option("--jobs", type=click.IntRange(1, None), default=1, show_default=True)
@click.option("--out", default=None)
def cmd_spectra(d, gamma, N, config, n_max, five_cases, gershgorin_grid, jobs, out):
    rows = []
    if five_cases:
        for g, dd in spectra.SPECIAL_CASES:
            rep = spectra.unstable_dimension(GasParams(dd, g, 1))
            rows.append({"gamma": str(g), "d": dd, "dim": rep.total, "decomposition": rep.decomposition()})
            click.echo(f"gamma={g} d={dd}: dim = {rep.total} ({rep.decomposition()})")
    report = None
    if d is not None or config:
        params, cfg = _params(d, gamma, N, config)
        report = spectra.spectral_report(params, n_max)
        if not spectra.is_special_case(params):
            bound = spectra.lifted_block_bound(params)
            report["dimension"] = {"total": bound.total, "decomposition": bound.decomposition(), "label": bound.label}
        for b in report["blocks"]:
            click.echo(f"{b['kind']:8s} {json.dumps(b['indices']):22s} census {tuple(b['census'])}")
        dim = report["dimension"]
        click.echo(f"dimension: {dim['total']} ({dim['decomposition']}, {dim['label']})")
        for gres in report["gershgorin"]:
            click.echo(f"gershgorin n={gres['n']}: {'pass' if gres['passed'] else 'FAIL'} (margin {gres['worst_margin']:.4g})")
    else:
        cfg = None
    failed = []
    if gershgorin_grid:
        grid = exponents.parameter_grid()
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as pool:
                res = [x for chunk in pool.map(_gersh_point, grid, chunksize=32) for x in chunk]
        else:
            res = [x for p in grid for x in _gersh_point(p)]
        failed = [(p, m) for p, m, g in res if not g.passed]
        click.echo(f"gershgorin grid: {len(res) - len(failed)}/{len(res)} pass")
    if out is not None or cfg is not None:
        path = _outdir(out, cfg)
        if report:
            _dump(path / "spectra.json", report)
            buf = io.StringIO()
            buf.write("kind,indices,neg,zero,pos\n")
            for b in report["blocks"]:
                idx = ";".join(f"{k}={v}" for k, v in b["indices"].items())
                buf.write(f"{b['kind']},{idx},{b['census'][0]},{b['census'][1]},{b['census'][2]}\n")
            _csv(path / "census.csv", buf.getvalue())
        if rows:
            _dump(path / "dimensions.json", {"cases": rows})
    if failed or (report and not all(g["passed"] for g in report["gershgorin"])):
        raise CertificateFailure("Gershgorin certificate failed")


# evolve ---------------------------------------------------------------------------------

@cli.command("evolve")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--d", type=click.IntRange(1, 3), default=None)
@click.option("--gamma", callback=_gamma, default=None)
@click.option("--N", "N", type=click.IntRange(1, None), default=1)
@click.option("--eps", type=float, default=1e-3, show_default=True, help="amplitude of the default Gaussian bump")
@click.option("--perturbation", default=None, help="e.g. 'V 1e-3 0 1; Q 1e-3 0 1'")
@click.option("--tau-end", type=float, default=30.0, show_default=True)
@click.option("--cells", type=click.IntRange(16, None), default=512, show_default=True)
@click.option("--out", default=None)
def cmd_evolve(config, d, gamma, N, eps, perturbation, tau_end, cells, out):
    if config:
        cfg = evolution.parse_evolve_config(Path(config).read_text())
    else:
        if d is None or gamma is None:
            raise click.UsageError("--d and --gamma are required without --config")
        try:
            params = GasParams(d, gamma, N)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        pert = evolution.parse_perturbation(perturbation) if perturbation is not None else evolution.gaussian_bump(eps)
        cfg = evolution.EvolveConfig(params, cells=cells, tau_end=tau_end, perturbation=pert)
    try:
        evolution.check_vanishing(cfg.perturbation, cfg.params.N)
    except evolution.PerturbationRejected as exc:
        raise click.UsageError(f"{exc} (orders 2..2N-2 must vanish)") from exc
    run = evolution.run_from_config(cfg)
    path = _outdir(out, None)
    (path / "evolve.ini").write_text(cfg.to_text())
    (path / "timeseries.csv").write_text(run.to_csv())
    (path / "final_fields.csv").write_text(evolution.field_dump_csv(run.final))
    for s in run.snapshots:
        (path / f"fields_tau{s.tau:.3f}.csv").write_text(evolution.field_dump_csv(s))
    rep = evolution.decay_report(run)
    _dump(path / "decay.json", {**rep.as_dict(), "min_outgoing_speed": run.min_speed})
    if run.eps == 0:
        click.echo("unperturbed run: " + ", ".join(f"{k} max {np.max(np.abs(v)):.2e}" for k, v in run.series.items()))
    else:
        w = rep.worst
        click.echo(f"slowest fitted rate {w.rate:.4f} ({w.name}); lambda_ = {rep.lambda_floor:.6f}")
    click.echo(f"minimum outgoing speed {run.min_speed:.6f}")


# verify ---------------------------------------------------------------------------------

def verify_point(params: GasParams, R_max: float = 1e4) -> dict:
    """Every numeric certificate for one parameter point."""
    e, series, table, entropy, ts, certs = build_pipeline(params, R_max)
    n = spectra.stabilization_order(params)
    out = {
        "profile": table.all_certified(),
        "q1_positive": ts.q1 > 0,
        "v1_negative": ts.v1 < 0 if params.N == 1 else None,
        "v1_over_q1_bound": ts.v1 / ts.q1 >= tail.barrier_slope(e),
        "lower_barrier": certs.lower_ok,
        "upper_barrier": certs.upper_ok,
        "resonance": abs(origin_series.normalized_det(e, e.N)) <= 1e-10,
        "gershgorin": all(spectra.gershgorin_order(params, m).passed for m in (n, n + 7)),
    }
    if spectra.is_special_case(params):
        out["dimension"] = spectra.unstable_dimension(params).total
    return out


def _failed(checks: dict) -> list[str]:
    return [k for k, v in checks.items() if v is False]


@cli.command("verify")
@param_options
@click.option("--rmax", type=float, default=1e4, show_default=True)
@click.option("--grid", "whole_grid", is_flag=True, help="run over the full parameter grid")
@click.option("--jobs", type=click.IntRange(1, None), default=1, show_default=True)
@click.option("--out", default=None)
def cmd_verify(d, gamma, N, config, rmax, whole_grid, jobs, out):
    if whole_grid:
        points = exponents.parameter_grid()
    else:
        params, _ = _params(d, gamma, N, config)
        points = [params]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(verify_point, points, [rmax] * len(points), chunksize=4))
    else:
        results = [verify_point(p, rmax) for p in points]
    bad = []
    for p, res in zip(points, results):
        f = _failed(res)
        if f:
            bad.append((p, f))
        if not whole_grid:
            for k, v in res.items():
                click.echo(f"{k}: {v}")
    click.echo(f"{len(points) - len(bad)}/{len(points)} parameter points pass")
    for p, f in bad[:20]:
        click.echo(f"  FAIL d={p.d} gamma={p.gamma} N={p.N}: {', '.join(f)}")
    if out:
        path = _outdir(out, None)
        _dump(path / "verify.json", {"points": [
            {"d": p.d, "gamma": str(p.gamma), "N": p.N, **r} for p, r in zip(points, results)]})
    if bad:
        raise CertificateFailure(f"{len(bad)} parameter points failed")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="implosion", standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, click.BadParameter) as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except (CertificateFailure, profile_ode.CertificateViolation, tail.InsufficientRange,
            evolution.OutgoingRegimeLost) as exc:
        click.echo(f"certificate failure: {exc}", err=True)
        return EXIT_CERT
    except (spectra.InternalInconsistency, origin_series.ExponentInconsistency) as exc:
        click.echo(f"internal inconsistency: {exc}", err=True)
        return EXIT_INTERNAL
    except ValueError as exc:
        # input rejected by a domain check (range, grid size, perturbation)
        click.echo(f"Error: {exc}", err=True)
        return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
