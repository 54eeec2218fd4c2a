"""Command-line surface: simulate, slam, eval, compare.

A run directory produced by ``simulate`` feeds ``slam``, whose output
directory feeds ``eval`` and ``compare``:

    propslam simulate --env world.txt --traj truth.txt --out run/
    propslam slam --variant prop-icp-pg --scans run/ --out run/prop_icp_pg/
    propslam eval --est run/prop_icp_pg --truth run/ --out run/report/
    propslam compare --truth run/ --runs run/*/

Every writing command also writes ``manifest.txt``: the fully resolved
configuration plus input hashes and library versions in comment lines.  A
manifest is itself a valid ``--config`` file, and re-running a command
with it reproduces the outputs byte for byte.

On any failure the command prints a one-line diagnostic to stderr, removes
whatever outputs it had already written, and exits nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import PropSlamError, ConfigError
from .io_formats import (
    RunConfig,
    config_with_variant,
    read_cloud,
    read_config,
    read_trajectory,
    read_world,
    sha256_file,
    write_cloud,
    write_graph,
    write_manifest,
    write_trajectory,
    atomic_write_text,
    format_float,
)
from .metrics import map_distance, translation_error_series
from .pipeline import VARIANTS, assemble_map, run_pipeline
from .simulator import simulate_sequence
from .svgchart import Series, line_chart

_CLI_VARIANTS = {
    "odometry": "odometry_only",
    "icp": "icp",
    "icp-pg": "icp_pg",
    "prop-icp": "prop_icp",
    "prop-icp-pg": "prop_icp_pg",
}
_LABEL_BLIND = ("odometry_only", "icp", "icp_pg")


class _Outputs:
    """Tracks files written by this invocation so failures clean up."""

    def __init__(self):
        self.written: list[Path] = []

    def register(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def discard_all(self) -> None:
        for path in reversed(self.written):
            try:
                path.unlink()
            except OSError:
                pass


def _load_config(path: str | None) -> tuple[RunConfig, set[str]]:
    if path is None:
        return RunConfig(), set()
    return read_config(path)


def _resolve_variant(
    flag: str | None, config: RunConfig, explicit: set[str]
) -> str:
    from_flag = _CLI_VARIANTS[flag] if flag else None
    from_config = config.variant if "variant" in explicit else None
    if from_flag and from_config and from_flag != from_config:
        raise ConfigError(
            "variant/config conflict: "
            f"--variant {flag} but config says {from_config}"
        )
    variant = from_flag or from_config
    if variant is None:
        raise ConfigError("no variant given; use --variant or a config key")
    return variant


def _check_variant_config(
    variant: str, config: RunConfig, explicit: set[str]
) -> None:
    if (
        variant in _LABEL_BLIND
        and "association.penalty" in explicit
        and config.icp.association.penalty > 0.0
    ):
        raise ConfigError(
            "variant/config conflict: label-blind variant "
            f"{variant} with association.penalty = "
            f"{config.icp.association.penalty} in the config; "
            "the penalty only applies to prop variants"
        )


def _read_run_inputs(scans_dir: Path):
    scan_paths = sorted((scans_dir / "scans").glob("*.txt"))
    if not scan_paths:
        raise PropSlamError(f"no scan files under {scans_dir / 'scans'}")
    scans = [read_cloud(p) for p in scan_paths]
    odometry = read_trajectory(scans_dir / "odometry.txt")
    return scans, odometry, scan_paths


def _input_hashes(paths: dict[str, Path]) -> dict[str, str]:
    return {display: sha256_file(path) for display, path in sorted(paths.items())}


def _cmd_simulate(args, outputs: _Outputs) -> int:
    config, _ = _load_config(args.config)
    world = read_world(args.env)
    truth = read_trajectory(args.traj)
    result = simulate_sequence(
        world, truth, config.sensor, config.odometry, config.seed
    )
    out = Path(args.out)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    for scan in result.scans:
        path = outputs.register(out / "scans" / f"frame_{scan.frame_id:05d}.txt")
        write_cloud(scan, path)
    write_trajectory(result.truth, outputs.register(out / "truth.txt"))
    write_trajectory(result.odometry, outputs.register(out / "odometry.txt"))
    inputs = {
        "env.txt": Path(args.env),
        "traj.txt": Path(args.traj),
    }
    write_manifest(
        config, _input_hashes(inputs), outputs.register(out / "manifest.txt")
    )
    print(f"wrote {len(result.scans)} scans to {out}")
    return 0


def _run_log_lines(result) -> list[str]:
    lines = [f"variant = {result.variant}", f"frames = {len(result.trajectory)}"]
    fallbacks = sum(1 for e in result.events if e.kind == "icp_fallback")
    lines.append(f"icp_fallbacks = {fallbacks}")
    lines.append(f"loops_accepted = {len(result.loops)}")
    report = result.optimize_report
    if report is not None:
        lines.append(
            "optimizer = "
            f"iterations {report.iterations}, "
            f"residual {format_float(report.initial_residual)} -> "
            f"{format_float(report.final_residual)}, "
            f"converged {report.converged}"
        )
    for event in result.events:
        lines.append(
            f"event {event.kind} {event.frame_a} {event.frame_b}: {event.detail}"
        )
    return lines


def _cmd_slam(args, outputs: _Outputs) -> int:
    config, explicit = _load_config(args.config)
    variant = _resolve_variant(args.variant, config, explicit)
    _check_variant_config(variant, config, explicit)
    scans_dir = Path(args.scans)
    scans, odometry, scan_paths = _read_run_inputs(scans_dir)
    result = run_pipeline(scans, odometry, variant, config.pipeline_params())

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(result.trajectory, outputs.register(out / "trajectory.txt"))
    write_cloud(result.world_map, outputs.register(out / "map.txt"))
    write_graph(result.graph(), outputs.register(out / "graph.txt"))
    atomic_write_text(
        outputs.register(out / "run_log.txt"),
        "\n".join(_run_log_lines(result)) + "\n",
    )
    inputs = {f"scans/{p.name}": p for p in scan_paths}
    inputs["odometry.txt"] = scans_dir / "odometry.txt"
    write_manifest(
        config_with_variant(config, variant),
        _input_hashes(inputs),
        outputs.register(out / "manifest.txt"),
    )
    print(f"{variant}: estimated {len(result.trajectory)} poses to {out}")
    return 0


def _est_variant(est_dir: Path) -> str:
    manifest = est_dir / "manifest.txt"
    if manifest.exists():
        config, explicit = read_config(manifest)
        if "variant" in explicit and config.variant:
            return config.variant
    return est_dir.name


def _truth_map(truth_dir: Path):
    scans, _, _ = _read_run_inputs(truth_dir)
    truth = read_trajectory(truth_dir / "truth.txt")
    return assemble_map(scans, truth), truth


def _cmd_eval(args, outputs: _Outputs) -> int:
    truth_dir = Path(args.truth)
    truth_map, truth = _truth_map(truth_dir)
    runs = []
    for est in args.est:
        est_dir = Path(est)
        estimate = read_trajectory(est_dir / "trajectory.txt")
        est_map = read_cloud(est_dir / "map.txt")
        errors = translation_error_series(estimate, truth)
        runs.append(
            (
                _est_variant(est_dir),
                estimate.frame_ids,
                errors,
                map_distance(est_map, truth_map),
            )
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = "frame," + ",".join(variant for variant, _, _, _ in runs)
    rows = [header]
    frame_ids = runs[0][1]
    for i, frame_id in enumerate(frame_ids):
        rows.append(
            f"{frame_id},"
            + ",".join(format_float(errors[i]) for _, _, errors, _ in runs)
        )
    atomic_write_text(
        outputs.register(out / "translation_error.csv"), "\n".join(rows) + "\n"
    )
    atomic_write_text(
        outputs.register(out / "map_distance.txt"),
        "".join(
            f"{variant} {format_float(distance)}\n"
            for variant, _, _, distance in runs
        ),
    )
    chart = line_chart(
        [
            Series(
                label=variant,
                x=tuple(float(f) for f in frames),
                y=tuple(float(e) for e in errors),
            )
            for variant, frames, errors, _ in runs
        ],
        title="Translation error per frame",
        x_label="frame",
        y_label="error [m]",
    )
    atomic_write_text(outputs.register(out / "errors.svg"), chart)
    inputs = {}
    for est in args.est:
        est_dir = Path(est)
        inputs[f"{est_dir.name}/trajectory.txt"] = est_dir / "trajectory.txt"
        inputs[f"{est_dir.name}/map.txt"] = est_dir / "map.txt"
    inputs["truth.txt"] = truth_dir / "truth.txt"
    write_manifest(
        RunConfig(), _input_hashes(inputs), outputs.register(out / "manifest.txt")
    )
    for variant, _, errors, distance in runs:
        print(
            f"{variant}: mean translation error {errors.mean():.6f} m, "
            f"map distance {distance:.6f} m"
        )
    return 0


def _cmd_compare(args, outputs: _Outputs) -> int:
    truth_map, _ = _truth_map(Path(args.truth))
    rows = []
    for run in args.runs:
        run_dir = Path(run)
        est_map = read_cloud(run_dir / "map.txt")
        rows.append((_est_variant(run_dir), map_distance(est_map, truth_map)))
    order = {variant: i for i, variant in enumerate(VARIANTS)}
    rows.sort(key=lambda row: (order.get(row[0], len(order)), row[0]))
    width = max(len("variant"), max(len(v) for v, _ in rows))
    lines = [f"{'variant'.ljust(width)}  map distance [m]"]
    for variant, distance in rows:
        lines.append(f"{variant.ljust(width)}  {distance:.6f}")
    table = "\n".join(lines)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(outputs.register(out / "map_distances.txt"), table + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propslam",
        description="Property-aware lidar SLAM on labeled point clouds.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser(
        "simulate", help="render labeled scans and noisy odometry along a trajectory"
    )
    simulate.add_argument("--env", required=True, help="world description file")
    simulate.add_argument("--traj", required=True, help="true trajectory file")
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.add_argument("--config", help="run configuration file")
    simulate.set_defaults(func=_cmd_simulate)

    slam = commands.add_parser("slam", help="estimate a trajectory and map")
    slam.add_argument("--variant", choices=sorted(_CLI_VARIANTS))
    slam.add_argument("--config", help="run configuration file")
    slam.add_argument(
        "--scans", required=True, help="directory produced by simulate"
    )
    slam.add_argument("--out", required=True, help="output directory")
    slam.set_defaults(func=_cmd_slam)

    evaluate = commands.add_parser("eval", help="score runs against the truth")
    evaluate.add_argument(
        "--est", required=True, nargs="+", help="slam output directories"
    )
    evaluate.add_argument(
        "--truth", required=True, help="directory produced by simulate"
    )
    evaluate.add_argument("--out", required=True, help="output directory")
    evaluate.set_defaults(func=_cmd_eval)

    compare = commands.add_parser(
        "compare", help="tabulate map distances across runs"
    )
    compare.add_argument("--runs", required=True, nargs="+")
    compare.add_argument(
        "--truth", required=True, help="directory produced by simulate"
    )
    compare.add_argument("--out", help="optional directory for the table")
    compare.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    outputs = _Outputs()
    try:
        return args.func(args, outputs)
    except (PropSlamError, OSError, ValueError) as failure:
        outputs.discard_all()
        print(f"propslam: {failure}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
