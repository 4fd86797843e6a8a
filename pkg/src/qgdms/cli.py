"""Configuration-driven command line: solve, study, diagnose.

Configs are INI files (flat typed key=value under section headers, see
README for the grammar).  Any key can be overridden from the environment
with QGD_<SECTION>__<KEY>.  Exit codes: 0 success, 2 configuration error,
3 CFL refusal, 4 blow-up.
"""

import argparse
import configparser
import json
import os
import sys
import time

import numpy as np

from . import analysis, cem, fem, solver
from .coefficient import generate_channels, load_raster
from .grid import GridConfigError, build_hierarchy

ENV_PREFIX = "QGD_"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_BLOWUP = 4


class ConfigError(ValueError):
    pass


def _parse_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = {s: dict(parser.items(s)) for s in parser.sections()}
    for key, val in os.environ.items():
        if not key.startswith(ENV_PREFIX) or "__" not in key:
            continue
        section, opt = key[len(ENV_PREFIX):].split("__", 1)
        cfg.setdefault(section.lower(), {})[opt.lower()] = val
    return cfg


def _get(cfg, section, key, conv, default=None, required=False):
    sec = cfg.get(section, {})
    if key not in sec:
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default
    try:
        return conv(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {sec[key]!r}") from exc


def _bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _load_field(cfg, base_dir, nx, ny):
    sec = cfg.get("field", {})
    if "path" in sec:
        path = sec["path"]
        if not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        field = load_raster(path)
    elif sec.get("generator") == "channels":
        field = generate_channels(
            nx, ny,
            _get(cfg, "field", "background", float, required=True),
            _get(cfg, "field", "channel_value", float, required=True),
            _get(cfg, "field", "seed", int, 0),
        )
    elif sec.get("generator") == "uniform":
        from .coefficient import uniform_field

        field = uniform_field(nx, ny, _get(cfg, "field", "value", float, 1.0))
    else:
        raise ConfigError("[field] needs 'path' or generator = channels|uniform")
    if (field.nx, field.ny) != (nx, ny):
        raise ConfigError(
            f"field raster is {field.nx}x{field.ny} but the mesh is {nx}x{ny}"
        )
    return field


def _parse_rows(text):
    rows = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            n, m = part.split(":")
            rows.append((int(n), int(m)))
        except ValueError as exc:
            raise ConfigError(f"bad study row {part!r}, expected Nx:m") from exc
    return rows


def _resolve_out_dir(requested, overwrite):
    """Never silently overwrite: suffix with -1, -2, ... unless --overwrite."""
    if overwrite or not os.path.isdir(requested) or not os.listdir(requested):
        os.makedirs(requested, exist_ok=True)
        return requested
    k = 1
    while True:
        cand = f"{requested}-{k}"
        if not os.path.isdir(cand) or not os.listdir(cand):
            os.makedirs(cand, exist_ok=True)
            return cand
        k += 1


def _common_setup(cfg, base_dir, threads):
    nx = _get(cfg, "mesh", "nx", int, required=True)
    ny = _get(cfg, "mesh", "ny", int, required=True)
    Nx = _get(cfg, "mesh", "nx_coarse", int, required=True)
    Ny = _get(cfg, "mesh", "ny_coarse", int, required=True)
    try:
        hier = build_hierarchy(nx, ny, Nx, Ny)
    except GridConfigError as exc:
        raise ConfigError(str(exc)) from exc
    field = _load_field(cfg, base_dir, nx, ny)
    ell = _get(cfg, "cem", "ell", int, 3)
    m = _get(cfg, "cem", "m", int, required=True)
    pou_kind = _get(cfg, "cem", "pou", str, "bilinear")
    if ell < 1 or m < 0:
        raise ConfigError(f"need ell >= 1 and m >= 0, got ell={ell}, m={m}")
    pou = fem.build_partition_of_unity(hier, field, pou_kind)
    return hier, field, pou, ell, m, threads


def _build_basis(hier, field, pou, ell, m, threads):
    fine_ops = solver.assemble_fine_operators(hier, field, pou)
    aux = cem.build_auxiliary_space(hier, field, pou, ell, threads=threads)
    basis = cem.build_multiscale_basis(
        hier, field, pou, aux, m, threads=threads,
        operators=(fine_ops.A_full, fine_ops.M_full),
    )
    c_inv = analysis.estimate_inverse_constant(basis, hier)
    return fine_ops, aux, basis, c_inv


def _time_block(cfg):
    alpha = _get(cfg, "time", "alpha", float, required=True)
    T = _get(cfg, "time", "t", float, required=True)
    dt = _get(cfg, "time", "dt", float, required=True)
    delta = _get(cfg, "time", "delta", float, 0.0)
    init = _get(cfg, "time", "init", str, "zero")
    source = _get(cfg, "time", "source", str, "static_sine")
    if alpha <= 0 or T <= 0 or dt <= 0:
        raise ConfigError(f"alpha, T, dt must be positive (got {alpha}, {T}, {dt})")
    return alpha, T, dt, delta, init, source


def cmd_solve(args):
    cfg = _parse_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    hier, field, pou, ell, m, threads = _common_setup(cfg, base_dir, args.threads)
    alpha, T, dt, delta, init, source_name = _time_block(cfg)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-12 * max(T, 1.0):
        raise ConfigError(f"dt={dt} does not divide T={T}")

    fine_ops, aux, basis, c_inv = _build_basis(hier, field, pou, ell, m, threads)
    verdict = solver.check_cfl(alpha, field.beta, c_inv, hier.coarse.H, dt, delta)

    if args.dry_run:
        print(
            f"dry-run ok H={hier.coarse.H:.5e} h={hier.fine.h:.5e} N_T={n_steps} "
            f"c_inv_emp={c_inv:.5e} cfl_slack={verdict.slack:.5e} "
            f"cfl={'PASS' if verdict.passed else 'FAIL'}"
        )
        return EXIT_OK

    out_dir = _resolve_out_dir(
        args.out or _get(cfg, "output", "dir", str, "out/solve"), args.overwrite
    )
    stride = _get(cfg, "output", "stride", int, max(1, n_steps // 200))

    source = solver.get_source(source_name, alpha=alpha)
    problem = solver.QgdProblem(alpha=alpha, source=source, T=T)
    space = solver.make_reduced_space(basis, fine_ops)
    config = solver.LeapfrogConfig(
        dt=dt, delta=delta, energy_stride=stride, init=init,
        allow_unstable=args.allow_unstable, cfl=verdict,
    )
    try:
        traj = solver.leapfrog_solve(space, problem, config)
    except solver.CflViolationError as exc:
        print(f"solve cfl-refused {exc}")
        return EXIT_CFL

    meta = {
        "H": hier.coarse.H, "h": hier.fine.h, "m": m, "ell": ell, "alpha": alpha,
        "dt": dt, "T": T, "n_steps": n_steps, "source": source.name,
        "field_hash": field.content_hash(), "Lambda": basis.Lambda,
        "sigma_aux": basis.sigma_aux, "c_inv_emp": c_inv,
        "cfl_slack": verdict.slack, "u0_norm": traj.u0_norm, "u1_norm": traj.u1_norm,
        "blowup": traj.blowup, "blowup_step": traj.blowup_step,
        "wall_seconds": {"basis": basis.build_seconds, "solve": traj.wall_seconds},
    }

    traj.energy_csv(os.path.join(out_dir, "energy.csv"))

    run_reference = _get(cfg, "time", "reference", _bool, True)
    if run_reference and not traj.blowup:
        cache = analysis.ReferenceCache(
            _get(cfg, "output", "cache_dir", str, os.path.join(out_dir, "ref_cache"))
        )
        dt_ref = analysis.reference_dt_auto(alpha, hier, field, dt)
        ref_cfg = solver.LeapfrogConfig(dt=dt_ref, init=init, energy_stride=stride)
        ref = cache.get_or_run(hier, field, problem, ref_cfg, fine_ops)
        rep = analysis.compute_errors(traj, ref, fine_ops, meta={
            "H": hier.coarse.H, "m": m, "ell": ell, "alpha": alpha,
            "source": source.name, "field_hash": field.content_hash(),
        })
        with open(os.path.join(out_dir, "errors.csv"), "w", encoding="ascii") as fh:
            fh.write(analysis.CSV_HEADER + "\n")
            fh.write(rep.csv_row() + "\n")
        meta["e_a"] = rep.e_a
        meta["e_l2"] = rep.e_l2
        meta["dt_reference"] = dt_ref

    with open(os.path.join(out_dir, "meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")

    if traj.blowup:
        print(f"solve blow-up step={traj.blowup_step} out={out_dir}")
        return EXIT_BLOWUP
    summary = f"solve ok out={out_dir}"
    if "e_a" in meta:
        summary += f" e_a={meta['e_a']:.5e} e_l2={meta['e_l2']:.5e}"
    print(summary)
    return EXIT_OK


def cmd_study(args):
    cfg = _parse_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    nx = _get(cfg, "mesh", "nx", int, required=True)
    ny = _get(cfg, "mesh", "ny", int, required=True)
    rows = _parse_rows(_get(cfg, "study", "rows", str, ""))
    alphas = [float(a) for a in _get(cfg, "study", "alphas", str, "").split(",") if a.strip()]
    if not rows or not alphas:
        raise ConfigError("[study] rows and alphas must be non-empty")
    for Nx, _ in rows:
        if nx % Nx or ny % Nx:
            raise ConfigError(f"study row Nx={Nx} does not nest in {nx}x{ny}")
    alpha0, T, dt, delta, init, source_name = _time_block(cfg)
    field = _load_field(cfg, base_dir, nx, ny)
    ell = _get(cfg, "cem", "ell", int, 3)
    pou_kind = _get(cfg, "cem", "pou", str, "bilinear")

    if args.dry_run:
        cells = len(rows) * len(alphas)
        print(
            f"dry-run ok rows={len(rows)} alphas={len(alphas)} cells={cells} "
            f"N_T={int(round(T / dt))} field_hash={field.content_hash()}"
        )
        return EXIT_OK

    out_dir = _resolve_out_dir(
        args.out or _get(cfg, "output", "dir", str, "out/study"), args.overwrite
    )
    spec = analysis.StudySpec(
        nx=nx, ny=ny, rows=rows, alphas=alphas, source=source_name, field=field,
        dt=dt, T=T, ell=ell, pou_kind=pou_kind, init=init, delta=delta,
        threads=args.threads, max_cells=args.max_cells,
        cache_dir=_get(cfg, "output", "cache_dir", str, os.path.join(out_dir, "ref_cache")),
    )
    t0 = time.perf_counter()
    table = analysis.run_convergence_study(spec)
    table.to_csv(os.path.join(out_dir, "table.csv"))
    if "svg" in _get(cfg, "output", "formats", str, "csv,svg"):
        table.plot_svg(os.path.join(out_dir, "table_e_a.svg"), "e_a")
        table.plot_svg(os.path.join(out_dir, "table_e_l2.svg"), "e_l2")
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="ascii") as fh:
        json.dump({**table.meta, "partial": table.partial,
                   "wall_seconds": time.perf_counter() - t0},
                  fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    status = "partial" if table.partial else "ok"
    print(f"study {status} out={out_dir} cells={len(table.cells)}")
    return EXIT_OK


def cmd_diagnose(args):
    cfg = _parse_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    hier, field, pou, ell, m, threads = _common_setup(cfg, base_dir, args.threads)
    fine_ops, aux, basis, c_inv = _build_basis(hier, field, pou, ell, m, threads)

    if args.dry_run:
        print(f"dry-run ok c_inv_emp={c_inv:.5e} Lambda={basis.Lambda:.5e}")
        return EXIT_OK

    out_dir = _resolve_out_dir(
        args.out or _get(cfg, "output", "dir", str, "out/diagnose"), args.overwrite
    )
    meta = {"c_inv_emp": c_inv, "Lambda": basis.Lambda, "sigma_aux": basis.sigma_aux,
            "H": hier.coarse.H, "field_hash": field.content_hash()}

    if "decay" in cfg:
        m_list = [int(v) for v in cfg["decay"].get("m_list", "0,1,2,3").split(",")]
        report = cem.measure_decay(
            hier, field, pou, aux, m_list, threads=threads,
            operators=(fine_ops.A_full, fine_ops.M_full),
        )
        report.to_csv(os.path.join(out_dir, "decay.csv"))
        meta["decay_m"] = m_list
        meta["decay_max_slope"] = float(report.slopes.max())

    if "scan" in cfg:
        alpha = _get(cfg, "time", "alpha", float, 0.1)
        factors = [float(v) for v in cfg["scan"].get("factors", "0.25,0.5,1,2,4").split(",")]
        steps = int(cfg["scan"].get("steps", "4000"))
        predicted = solver.check_cfl(alpha, field.beta, c_inv, hier.coarse.H, 1.0, 0.0).dt_max
        dt_list = [f * predicted for f in factors]
        space = solver.make_reduced_space(basis, fine_ops)
        report = analysis.cfl_boundary_scan(
            space, alpha, field.beta, c_inv, hier.coarse.H, dt_list, steps=steps,
        )
        report.to_csv(os.path.join(out_dir, "scan.csv"))
        meta["scan_predicted_dt"] = report.predicted_dt
        meta["scan_empirical_dt"] = report.empirical_critical

    cem.export_basis(basis, os.path.join(out_dir, "basis"), c_inv_emp=c_inv)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    print(f"diagnose ok out={out_dir} c_inv_emp={c_inv:.5e}")
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="qgdms", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("solve", cmd_solve), ("study", cmd_study), ("diagnose", cmd_diagnose)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config path")
        p.add_argument("--dry-run", action="store_true")
        p.add_argument("--allow-unstable", action="store_true")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--max-cells", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--overwrite", action="store_true")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GridConfigError) as exc:
        print(f"{args.command} config-error {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except solver.CflViolationError as exc:
        print(f"{args.command} cfl-refused {exc}", file=sys.stderr)
        return EXIT_CFL
    except Exception as exc:  # pragma: no cover - surfaced for scripting
        print(f"{args.command} error {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
