"""Command-line front end.

Subcommands run the packaged studies and write deterministic CSVs
(fixed column order, 17-significant-digit floats) plus optional
self-contained SVG line charts.  Options come from a flat key = value
config file, command-line flags, or both (flags win).  Exit codes:
0 success, 1 validation/input error, 2 numerical failure; failures
print a single machine-parsable line to stderr.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .benchmarks import (
    DELTA_OVER_H,
    field_dump_rows,
    run_horizon_sensitivity,
    run_manufactured,
    run_patch_test,
    run_plate_hole,
)
from .correspondence import Material
from .dispersion import WaveConfig, default_k_grid, setup_bar, sweep
from .errors import NumericalError, ValidationError
from .formulation import ALL_FORMULATIONS, Formulation
from .gradops import build_weight_table
from .pointcloud import NodeKind, build_families, generate_uniform_grid, \
    import_cloud, perturb_grid, split_families

__all__ = ["main", "parse_config", "emit_csv", "emit_plot", "RunConfig"]

_FORMULATIONS = ("rk", "gmls", "ba-rk", "ba-gmls")
_ORDERS = (1, 2, 3)

# allowed config keys per subcommand: name -> (type, default)
_COMMON_KEYS = {
    "formulation": (str, None),
    "order": (int, None),
    "seed": (int, None),
    "out": (str, "."),
    "threads": (int, 0),
    "plot": (bool, False),
}
_SCHEMAS = {
    "patch-test": {"h": (float, 0.2)},
    "dispersion": {
        "delta_over_h": (float, 3.0),
        "grid": (str, "uniform"),
        "k_points": (int, 200),
    },
    "manufactured": {
        "grid": (str, "uniform"),
        "levels": (int, 3),
        "horizon": (float, None),
        "fields": (bool, False),
    },
    "plate-hole": {
        "levels": (int, 3),
        "nu": (float, 0.3),
        "mesh": (str, "polar"),
        "clouds": (str, ""),
        "horizon": (float, None),
        "fields": (bool, False),
    },
    "horizon-study": {
        "deltas": (str, "2.75,3.5,4.25"),
        "refine": (int, 2),
    },
    "dump-weights": {
        "cloud": (str, ""),
        "h": (float, 0.2),
        "horizon": (float, None),
        "family": (str, "stress"),
    },
}


class RunConfig(dict):
    """Validated option set for one subcommand run."""

    def __init__(self, subcommand, values):
        super().__init__(values)
        self.subcommand = subcommand


def _parse_value(key, raw, typ):
    try:
        if typ is bool:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"config key {key!r}: {exc}") from exc


def parse_config(subcommand: str, path=None, overrides=None) -> RunConfig:
    """Merge file values and flag overrides against the subcommand schema.

    Unknown keys, type mismatches, and horizon-rule violations are
    rejected with the offending key named.
    """
    if subcommand not in _SCHEMAS:
        raise ValidationError(f"unknown subcommand {subcommand!r}")
    schema = dict(_COMMON_KEYS)
    schema.update(_SCHEMAS[subcommand])
    values = {k: default for k, (_, default) in schema.items()}

    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file not found: {path}")
        for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in schema:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, val, schema[key][0])

    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in schema:
            raise ValidationError(f"unknown option {key!r}")
        values[key] = _parse_value(key, val, schema[key][0])

    _validate(subcommand, values)
    return RunConfig(subcommand, values)


def _validate(subcommand, values):
    if values["formulation"] is not None:
        if values["formulation"] not in _FORMULATIONS:
            raise ValidationError(
                f"formulation must be one of {_FORMULATIONS}, "
                f"got {values['formulation']!r}")
    if values["order"] is not None and values["order"] not in _ORDERS:
        raise ValidationError(f"order must be in {_ORDERS}, got {values['order']}")
    if values["seed"] is not None and values["seed"] < 0:
        raise ValidationError("seed must be nonnegative")
    order = values["order"]
    if subcommand == "dispersion":
        if values["grid"] not in ("uniform", "perturbed"):
            raise ValidationError("grid must be uniform or perturbed")
        if values["k_points"] < 1:
            raise ValidationError("k_points must be positive")
        n = order if order is not None else 2
        if values["delta_over_h"] <= n:
            raise ValidationError(
                f"horizon rule: delta must exceed order*spacing "
                f"(delta_over_h {values['delta_over_h']} <= order {n})")
    if subcommand in ("manufactured", "horizon-study"):
        if subcommand == "manufactured" and values["grid"] not in (
                "uniform", "perturbed", "perturbed-nested"):
            raise ValidationError(
                "grid must be uniform, perturbed, or perturbed-nested")
        hz = values.get("horizon")
        if hz is not None and order is not None and hz <= order:
            raise ValidationError(
                f"horizon rule: delta must exceed order*spacing "
                f"(horizon {hz} <= order {order})")
    if subcommand == "plate-hole" and values["mesh"] not in (
            "polar", "triangular"):
        raise ValidationError("mesh must be polar or triangular")
    if subcommand == "dump-weights" and values["family"] not in (
            "kinematic", "stress"):
        raise ValidationError("family must be kinematic or stress")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def emit_csv(rows, header, path) -> None:
    """Write byte-stable CSV: fixed column order, 17-digit floats."""
    if not rows:
        raise ValidationError("refusing to write an empty CSV")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[k]) for k in header) + "\n")


def emit_plot(curves, path, log_log=False, title="") -> None:
    """Minimal self-contained SVG line chart.

    ``curves`` is a list of (label, x, y) with positive data required
    in log-log mode.  Output bytes are deterministic.
    """
    if not curves:
        raise ValidationError("refusing to plot zero curves")
    width, height, margin = 640, 480, 60
    xs = np.concatenate([np.asarray(c[1], dtype=float) for c in curves])
    ys = np.concatenate([np.asarray(c[2], dtype=float) for c in curves])
    if log_log:
        if np.any(xs <= 0) or np.any(ys <= 0):
            raise ValidationError("log-log plot needs positive data")
        xs, ys = np.log10(xs), np.log10(ys)
    finite = np.isfinite(xs) & np.isfinite(ys)
    x0, x1 = float(xs[finite].min()), float(xs[finite].max())
    y0, y1 = float(ys[finite].min()), float(ys[finite].max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#17becf", "#7f7f7f"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{width // 2}" y="24" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for i, (label, cx, cy) in enumerate(curves):
        cx = np.asarray(cx, dtype=float)
        cy = np.asarray(cy, dtype=float)
        if log_log:
            cx, cy = np.log10(cx), np.log10(cy)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(cx, cy)
                       if np.isfinite(a) and np.isfinite(b))
        color = palette[i % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - margin + 4}" '
                     f'y="{margin + 16 * i + 12}" font-size="11" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


def _selected_formulations(cfg):
    if cfg["formulation"] is not None:
        return [Formulation.parse(cfg["formulation"])]
    return list(ALL_FORMULATIONS)


def _selected_orders(cfg):
    return [cfg["order"]] if cfg["order"] is not None else list(_ORDERS)


_FIELD_HEADER = ["id", "x", "y", "u1", "u2", "P11", "P12", "P22"]


def _emit_field_dumps(report, material, out, tag):
    for level in report.levels:
        rows = field_dump_rows(level, material)
        emit_csv(rows, _FIELD_HEADER,
                 Path(out) / f"fields_{tag}_L{level['level']}.csv")


def _report_rows(report, order, label):
    rows = []
    errs, hs = [], []
    for level in report.levels:
        errs.append(level["rms_u"])
        hs.append(level["h"])
        if len(hs) >= 2 and np.isfinite(errs).all():
            rate = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        elif len(hs) >= 2:
            srs = [lv["rms_stress"] for lv in report.levels[: len(hs)]]
            rate = float(np.polyfit(np.log(hs), np.log(srs), 1)[0])
        else:
            rate = float("nan")
        rows.append({
            "level": level["level"], "h": level["h"], "n": order,
            "formulation": label, "rms_u": level["rms_u"],
            "rms_stress": level["rms_stress"], "rate": rate,
        })
    return rows


def _cmd_patch_test(cfg):
    rows = []
    failed = 0
    for form in _selected_formulations(cfg):
        for order in _selected_orders(cfg):
            res = run_patch_test(form, order, h=cfg["h"],
                                 seed=cfg["seed"] or 0)
            rows.append({
                "formulation": form.label, "n": order,
                "f_error": res.f_error, "residual_scale": res.residual_scale,
                "passed": int(res.passed),
            })
            failed += 0 if res.passed else 1
            print(f"patch-test {form.label} n={order}: "
                  f"{'PASS' if res.passed else 'FAIL'} "
                  f"(F err {res.f_error:.3e}, residual {res.residual_scale:.3e})")
    emit_csv(rows, ["formulation", "n", "f_error", "residual_scale", "passed"],
             Path(cfg["out"]) / "patch_test.csv")
    if failed:
        raise NumericalError(f"{failed} patch test case(s) failed")


def _cmd_dispersion(cfg):
    rows = []
    curves = []
    order = cfg["order"] if cfg["order"] is not None else 2
    for form in _selected_formulations(cfg):
        wave = WaveConfig(formulation=form, delta_over_h=cfg["delta_over_h"],
                          grid=cfg["grid"], order=order,
                          seed=cfg["seed"] if cfg["seed"] is not None else 5)
        bar = setup_bar(wave)
        curve = sweep(wave, default_k_grid(wave, cfg["k_points"]), bar)
        norm = curve.normalized()
        for k_norm, re_n, im_n in norm:
            rows.append({
                "k_norm": float(k_norm), "re_omega_norm": float(re_n),
                "im_omega_norm": float(im_n), "formulation": form.label,
                "delta_over_h": cfg["delta_over_h"], "grid": cfg["grid"],
            })
        curves.append((form.label, norm[:, 0], np.abs(norm[:, 1])))
    out = Path(cfg["out"])
    emit_csv(rows, ["k_norm", "re_omega_norm", "im_omega_norm", "formulation",
                    "delta_over_h", "grid"], out / "dispersion.csv")
    if cfg["plot"]:
        emit_plot(curves, out / "dispersion.svg",
                  title=f"dispersion d/h={cfg['delta_over_h']} {cfg['grid']}")
    print(f"dispersion: wrote {len(rows)} samples to {out / 'dispersion.csv'}")


def _cmd_manufactured(cfg):
    rows = []
    curves = []
    for form in _selected_formulations(cfg):
        for order in _selected_orders(cfg):
            rep = run_manufactured(form, order, n_levels=cfg["levels"],
                                   grid=cfg["grid"], seed=cfg["seed"] or 0,
                                   delta_over_h=cfg["horizon"])
            rws = _report_rows(rep, order, form.label)
            rows.extend(rws)
            curves.append((f"{form.label} n={order}",
                           [r["h"] for r in rws], [r["rms_u"] for r in rws]))
            if cfg["fields"]:
                _emit_field_dumps(rep, Material.plane_strain(100000.0, 0.3),
                                  cfg["out"], f"{form.label}_n{order}")
            print(f"manufactured {form.label} n={order} {cfg['grid']}: "
                  f"rate_u={rep.rate_u:.2f}")
    out = Path(cfg["out"])
    emit_csv(rows, ["level", "h", "n", "formulation", "rms_u", "rms_stress",
                    "rate"], out / "manufactured.csv")
    if cfg["plot"]:
        emit_plot(curves, out / "manufactured.svg", log_log=True,
                  title=f"manufactured {cfg['grid']}")


def _cmd_plate_hole(cfg):
    rows = []
    curves = []
    paths = [p for p in cfg["clouds"].split(",") if p]
    for form in _selected_formulations(cfg):
        for order in _selected_orders(cfg):
            if cfg["horizon"] is not None and cfg["horizon"] <= order:
                raise ValidationError(
                    f"horizon rule: delta must exceed order*spacing "
                    f"(horizon {cfg['horizon']} <= order {order})")
            rep = run_plate_hole(form, order, n_levels=cfg["levels"],
                                 nu=cfg["nu"], mesh=cfg["mesh"],
                                 cloud_paths=paths or None,
                                 delta=cfg["horizon"])
            rws = _report_rows(rep, order, form.label)
            rows.extend(rws)
            curves.append((f"{form.label} n={order}",
                           [r["h"] for r in rws],
                           [r["rms_stress"] for r in rws]))
            if cfg["fields"]:
                _emit_field_dumps(rep, Material.plane_strain(100000.0,
                                                             cfg["nu"]),
                                  cfg["out"], f"{form.label}_n{order}")
            print(f"plate-hole {form.label} n={order} {cfg['mesh']} "
                  f"nu={cfg['nu']}: rate_stress={rep.rate_stress:.2f}")
    out = Path(cfg["out"])
    emit_csv(rows, ["level", "h", "n", "formulation", "rms_u", "rms_stress",
                    "rate"], out / "plate_hole.csv")
    if cfg["plot"]:
        emit_plot(curves, out / "plate_hole.svg", log_log=True,
                  title=f"plate-hole {cfg['mesh']} nu={cfg['nu']}")


def _cmd_horizon_study(cfg):
    deltas = tuple(float(v) for v in cfg["deltas"].split(",") if v)
    if not deltas:
        raise ValidationError("deltas must name at least one horizon multiple")
    order = cfg["order"] if cfg["order"] is not None else 2
    forms = _selected_formulations(cfg)
    table = run_horizon_sensitivity(deltas=deltas, order=order,
                                    formulations=forms,
                                    n_refine=cfg["refine"],
                                    seed=cfg["seed"] if cfg["seed"] is not None
                                    else 1)
    rows = []
    for (dh, label), rep in sorted(table.items()):
        lv = rep.levels[0]
        rows.append({"delta_over_h": dh, "formulation": label, "h": lv["h"],
                     "n": order, "rms_u": lv["rms_u"]})
        print(f"horizon-study d/h={dh} {label}: rms_u={lv['rms_u']:.4e}")
    emit_csv(rows, ["delta_over_h", "formulation", "h", "n", "rms_u"],
             Path(cfg["out"]) / "horizon_study.csv")


def _cmd_dump_weights(cfg):
    order = cfg["order"] if cfg["order"] is not None else 2
    form = Formulation.parse(cfg["formulation"] or "ba-rk")
    if cfg["cloud"]:
        cloud = import_cloud(cfg["cloud"])
    else:
        cloud = generate_uniform_grid(((-1.0, 1.0), (-1.0, 1.0)), cfg["h"])
        if cfg["seed"]:
            cloud = perturb_grid(cloud, 0.15, cfg["seed"])
    dh = cfg["horizon"] if cfg["horizon"] is not None else DELTA_OVER_H[order]
    if dh <= order:
        raise ValidationError(
            f"horizon rule: delta must exceed order*spacing ({dh} <= {order})")
    fams = split_families(build_families(cloud, dh * cloud.h), cloud)
    centers = np.nonzero(cloud.kind == NodeKind.BULK)[0]
    table = build_weight_table(cloud, fams, centers, route=form.route,
                               order=order, neighborhood=cfg["family"])
    rows = []
    for slot, center in enumerate(table.centers):
        s, e = table.offsets[slot], table.offsets[slot + 1]
        for k in range(s, e):
            row = {"node_id": int(cloud.ids[center]),
                   "neighbor_id": int(cloud.ids[table.neighbors[k]]),
                   "gamma_x": float(table.vectors[k, 0])}
            if cloud.d > 1:
                row["gamma_y"] = float(table.vectors[k, 1])
            rows.append(row)
    header = ["node_id", "neighbor_id", "gamma_x"] + (
        ["gamma_y"] if cloud.d > 1 else [])
    emit_csv(rows, header, Path(cfg["out"]) / "weights.csv")
    print(f"dump-weights: {len(rows)} bonds "
          f"({form.route}, n={order}, {cfg['family']})")


_COMMANDS = {
    "patch-test": _cmd_patch_test,
    "dispersion": _cmd_dispersion,
    "manufactured": _cmd_manufactured,
    "plate-hole": _cmd_plate_hole,
    "horizon-study": _cmd_horizon_study,
    "dump-weights": _cmd_dump_weights,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pdmeshfree",
        description="Meshfree peridynamic correspondence-model studies")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value options file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", default=None, help="random seed")
        p.add_argument("--formulation", default=None,
                       help="rk | gmls | ba-rk | ba-gmls (default: all)")
        p.add_argument("--order", default=None, help="polynomial order 1..3")
        p.add_argument("--threads", default=None, help="compute threads")
        p.add_argument("--plot", action="store_const", const="1", default=None,
                       help="also write an SVG chart")
        for key, (_, default) in _SCHEMAS[name].items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key,
                           default=None, help=f"(default {default})")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("subcommand", "config")}
    try:
        cfg = parse_config(args.subcommand, args.config, overrides)
        if cfg["threads"]:
            _backend.set_num_threads(int(cfg["threads"]))
        _COMMANDS[args.subcommand](cfg)
    except ValidationError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
