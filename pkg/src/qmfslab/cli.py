"""Batch experiment runner.

Subcommands: check, simulate, force, koopman, spin, circuit.  Each run
writes CSV data plus a JSON summary (tool version, config hash, applied
tolerances, residuals, seeds, pass/fail per invariant).  Exit codes:
0 success, 1 invariant violation (details in the summary), 2 invalid
input.

Reproducibility: trajectory i of a batch uses noise streams keyed by
(master_seed, i, channel), so outputs are bit-identical across reruns
and across --parallel settings; result files are keyed by seed index.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, circuits, conditional, fock, koopman, models, spins
from .phase_space import is_qmfs, model_from_json, two_time_commutator

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_BAD_INPUT = 2


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_summary(out_dir: Path, config: dict, payload: dict) -> None:
    summary = {
        "tool": "qmfslab",
        "version": __version__,
        "config": config,
        "config_hash": _config_hash(config),
    }
    summary.update(payload)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
        fh.write("\n")


def _build_bundle(args) -> models.ModelBundle:
    if getattr(args, "model_file", None):
        model, obs = model_from_json(Path(args.model_file).read_text())
        qmfs_sets = (obs,) if obs is not None else ()
        return models.ModelBundle(
            model=model,
            named_bases={"physical": np.eye(model.dim)},
            qmfs_sets=(),
            description=f"model from {args.model_file}",
            metadata={"observables": obs},
        )
    name = args.model
    if name == "single":
        return models.single_oscillator(args.m, args.omega, args.hbar)
    if name == "pair":
        return models.oscillator_pair(args.m, args.omega, args.hbar)
    if name == "sideband":
        return models.sideband_model(args.omega, args.hbar)
    if name == "spin-hp":
        return models.spin_pair_hp(args.j0, args.gamma_b0, args.hbar)
    raise ValueError(f"unknown model {name!r}")


def _observable_sets(bundle, args):
    sets = list(bundle.qmfs_sets)
    obs = bundle.metadata.get("observables")
    if obs is not None:
        sets.append(obs)
    if not sets and bundle.model.n_modes == 1:
        from .phase_space import ObservableSet

        sets.append(ObservableSet(np.eye(2), ("q", "p")))
    return sets


def cmd_check(args, out_dir: Path, config: dict) -> int:
    bundle = _build_bundle(args)
    model = bundle.model
    tol = 1e-12 * args.tol_scale
    grid_tol = 1e-10 * args.tol_scale
    omega = bundle.metadata.get("omega") or bundle.metadata.get("gamma_B0") or 1.0
    rows = []
    ok = True
    results = []
    for obs in _observable_sets(bundle, args):
        verdict = is_qmfs(model, obs, tol=tol)
        ts = np.linspace(0.0, 10.0 / omega, 20)
        grid_max = 0.0
        for t in ts:
            for tp in ts:
                K = two_time_commutator(model, obs, t, tp)
                grid_max = max(grid_max, float(np.max(np.abs(K))))
        scale = model.hbar * np.linalg.norm(obs.S, 2) ** 2
        grid_ok = (grid_max < grid_tol * scale) if verdict.is_qmfs else True
        ok = ok and grid_ok
        results.append(
            {
                "labels": list(obs.labels),
                "verdict": "QMFS" if verdict.is_qmfs else "NOT_QMFS",
                "algebraic_residual": verdict.max_residual,
                "witness": verdict.witness,
                "grid_commutator_max": grid_max,
                "grid_consistent": bool(grid_ok),
            }
        )
        rows.append(
            (
                1.0 if verdict.is_qmfs else 0.0,
                verdict.max_residual,
                grid_max,
            )
        )
    _write_csv(
        out_dir / "check.csv",
        ["is_qmfs", "algebraic_residual", "grid_commutator_max"],
        rows,
    )
    _write_summary(
        out_dir,
        config,
        {
            "tolerances": {"algebraic": tol, "grid": grid_tol},
            "sets": results,
            "passed": bool(ok),
        },
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def _channels_from_args(bundle, args):
    if bundle.model.n_modes == 2:
        s = models.ROW_Q
    else:
        s = np.array([1.0, 0.0])
    return (conditional.MeasurementChannel(s, args.k, args.eta),)


def _force_from_args(bundle, args):
    if args.force_amp == 0.0:
        return None
    b = bundle.model.force_couplings[0]
    return conditional.ForceDrive.sinusoid(
        b, args.force_amp, args.force_freq, args.force_phase
    )


def cmd_simulate(args, out_dir: Path, config: dict) -> int:
    bundle = _build_bundle(args)
    model = bundle.model
    channels = _channels_from_args(bundle, args) if args.k > 0 else ()
    force = _force_from_args(bundle, args)
    state0 = conditional.vacuum_state(model)

    def run_one(i):
        return i, conditional.evolve_conditional(
            model,
            state0,
            channels,
            force=force,
            dt=args.dt,
            T=args.T,
            seed=(args.seed, i),
            cov_stride=args.cov_stride,
        )

    indices = list(range(args.batch))
    if args.parallel > 1:
        with concurrent.futures.ThreadPoolExecutor(args.parallel) as pool:
            trajectories = dict(pool.map(run_one, indices))
    else:
        trajectories = dict(map(run_one, indices))

    d = model.dim
    for i in indices:
        traj = trajectories[i]
        header = (
            ["time"]
            + [f"mean_{j}" for j in range(d)]
            + [f"yrecord_{c}" for c in range(len(channels))]
        )
        rows = []
        for n, t in enumerate(traj.times):
            rec = traj.records[n - 1] if n > 0 else np.zeros(len(channels))
            rows.append([t, *traj.means[n], *rec])
        _write_csv(out_dir / f"trajectory_{i:04d}.csv", header, rows)
        cov_header = ["time"] + [
            f"cov_{a}_{b}" for a in range(d) for b in range(a, d)
        ]
        cov_rows = []
        for n, t in enumerate(traj.cov_times):
            V = traj.covs[n]
            cov_rows.append([t] + [V[a, b] for a in range(d) for b in range(a, d)])
        _write_csv(out_dir / f"covariance_{i:04d}.csv", cov_header, cov_rows)

    _write_summary(
        out_dir,
        config,
        {
            "seeds": [[args.seed, i] for i in indices],
            "n_trajectories": args.batch,
            "passed": True,
        },
    )
    return EXIT_OK


def cmd_force(args, out_dir: Path, config: dict) -> int:
    bundle = _build_bundle(args)
    model = bundle.model
    channels = _channels_from_args(bundle, args)
    omega = bundle.metadata.get("omega", 1.0)
    b = model.force_couplings[0]
    template = conditional.ForceDrive.sinusoid(b, 1.0, omega)
    std = conditional.force_posterior_std(
        model, channels, template, args.dt, args.T
    )
    result = {"model": args.model, "posterior_std": std}
    rows = [[args.k, args.eta, std]]
    header = ["k", "eta", "posterior_std"]
    ok = True
    if args.compare_single and args.model == "pair":
        single = models.single_oscillator(args.m, args.omega, args.hbar)
        ch_s = (
            conditional.MeasurementChannel(
                np.array([1.0, 0.0]), args.k, args.eta
            ),
        )
        tmpl_s = conditional.ForceDrive.sinusoid(
            single.model.force_couplings[0], 1.0, omega
        )
        std_single = conditional.force_posterior_std(
            single.model, ch_s, tmpl_s, args.dt, args.T
        )
        result["posterior_std_single"] = std_single
        result["ratio_pair_over_single"] = std / std_single
        rows[0].append(std / std_single)
        header.append("ratio_pair_over_single")
        ok = std / std_single < 1.0
    _write_csv(out_dir / "force.csv", header, rows)
    _write_summary(out_dir, config, {"force": result, "passed": bool(ok)})
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_koopman(args, out_dir: Path, config: dict) -> int:
    m, omega, eps = args.m, args.omega, args.epsilon
    f_poly = fock.poly1((0, 1, 1.0 / m), (2, 0, eps))
    g_poly = fock.poly1((1, 0, m * omega**2))
    flow = koopman.ClassicalFlow(f_poly, g_poly, dt=args.dt)
    times, Qs, Ps = koopman.integrate(flow, args.q0, args.pi0, args.T)
    _write_csv(
        out_dir / "classical.csv",
        ["time", "Q", "Pi"],
        np.column_stack([times, Qs, Ps]),
    )

    # Small fixed trusted core: the commutator defect of the truncated
    # nonlinear Hamiltonian contaminates higher excitation levels first,
    # so the residual converges only on a core held fixed while the
    # ladder grows.
    spec = fock.TruncationSpec(
        n_levels=args.n_levels, n_modes=2, core_levels=min(2, args.n_levels - 1)
    )
    pk = fock.PolyKoopman(M=1, f=(f_poly,), g=(g_poly,))
    H, ops = fock.build_koopman_hamiltonian(pk, spec)
    t_grid = np.linspace(0.0, min(args.T, 2.0 / omega), 5)
    residual = fock.commutator_residual(
        H, [ops["Q"][0], ops["Pi"][0]], t_grid, spec
    )
    tol = 1e-5 * args.tol_scale
    ok = residual < tol
    _write_summary(
        out_dir,
        config,
        {
            "tolerances": {"oracle_residual": tol},
            "oracle_residual": residual,
            "passed": bool(ok),
        },
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_spin(args, out_dir: Path, config: dict) -> int:
    j0_list = [float(x) for x in args.j0_list.split(",")]
    rows = []
    ok = True
    tol = 1e-10 * args.tol_scale
    for J0 in j0_list:
        pair = spins.build_spin_pair(J0, args.gamma_b0)
        residual = spins.qmfs_commutator_identity(pair, 0.7 / args.gamma_b0,
                                                  0.2 / args.gamma_b0)
        # fixed physical displacement: the rotation angle shrinks with
        # J0, so the Gaussian-model error decreases across the sweep
        dev_mean, dev_var = spins.hp_agreement(
            pair,
            0.5,
            np.linspace(0.0, 2 * np.pi / args.gamma_b0, 9),
        )
        ok = ok and residual < tol
        rows.append([J0, residual, dev_mean, dev_var])
    _write_csv(
        out_dir / "spin_sweep.csv",
        ["J0", "residual_norm", "hp_deviation_mean", "hp_deviation_var"],
        rows,
    )
    _write_summary(
        out_dir,
        config,
        {"tolerances": {"identity_residual": tol}, "passed": bool(ok)},
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_circuit(args, out_dir: Path, config: dict) -> int:
    circuit = circuits.ReversibleCircuit.from_text(
        Path(args.file).read_text()
    )
    tables = [circuits.propagate_z(circuit, j) for j in range(circuit.n_bits)]
    rows = []
    for x in range(1 << circuit.n_bits):
        rows.append([x] + [t(x) for t in tables])
    _write_csv(
        out_dir / "truth_tables.csv",
        ["input"] + [f"f_{j}" for j in range(circuit.n_bits)],
        rows,
    )
    payload = {"n_bits": circuit.n_bits, "n_gates": len(circuit.gates)}
    ok = True
    if args.verify:
        deviation = circuits.dense_oracle_check(circuit)
        payload["dense_deviation"] = deviation
        payload["tolerances"] = {"dense_deviation": 0}
        ok = deviation == 0
    _write_summary(out_dir, config, {**payload, "passed": bool(ok)})
    return EXIT_OK if ok else EXIT_VIOLATION


def _add_model_args(p):
    p.add_argument("--model", default="pair",
                   choices=["single", "pair", "sideband", "spin-hp"])
    p.add_argument("--model-file", default=None,
                   help="JSON model fixture (overrides --model)")
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--j0", type=float, default=8.0)
    p.add_argument("--gamma-b0", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmfslab",
        description="Back-action-evading subsystem experiments",
    )
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--out", default="qmfslab_out", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--tol-scale", type=float, default=1.0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="QMFS verdicts and commutator residuals")
    _add_model_args(p)

    p = sub.add_parser("simulate", help="conditional trajectories")
    _add_model_args(p)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--cov-stride", type=int, default=100)
    p.add_argument("--force-amp", type=float, default=0.0)
    p.add_argument("--force-freq", type=float, default=1.0)
    p.add_argument("--force-phase", type=float, default=0.0)

    p = sub.add_parser("force", help="posterior-std force-sensing table")
    _add_model_args(p)
    p.add_argument("--k", type=float, default=10.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=2e-3)
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--compare-single", action="store_true")

    p = sub.add_parser("koopman", help="classical flow vs dense oracle")
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--q0", type=float, default=0.3)
    p.add_argument("--pi0", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--n-levels", type=int, default=20)

    p = sub.add_parser("spin", help="finite-J0 sweep")
    p.add_argument("--j0-list", default="2,4,8")
    p.add_argument("--gamma-b0", type=float, default=1.0)

    p = sub.add_parser("circuit", help="reversible-circuit propagation")
    p.add_argument("--file", required=True)
    p.add_argument("--verify", action="store_true")

    return parser


# keys allowed in a JSON config, per subcommand (global keys always allowed)
_GLOBAL_KEYS = {"command", "out", "seed", "tol_scale"}
_COMMAND_KEYS = {
    "check": {"model", "model_file", "m", "omega", "hbar", "j0", "gamma_b0"},
    "simulate": {
        "model", "model_file", "m", "omega", "hbar", "j0", "gamma_b0",
        "k", "eta", "dt", "T", "batch", "parallel", "cov_stride",
        "force_amp", "force_freq", "force_phase",
    },
    "force": {
        "model", "model_file", "m", "omega", "hbar", "j0", "gamma_b0",
        "k", "eta", "dt", "T", "compare_single",
    },
    "koopman": {
        "m", "omega", "epsilon", "q0", "pi0", "dt", "T", "n_levels",
    },
    "spin": {"j0_list", "gamma_b0"},
    "circuit": {"file", "verify"},
}


def _apply_config(args, argv) -> None:
    """Overlay JSON config values onto defaulted (not explicitly set) args."""
    doc = json.loads(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    allowed = _GLOBAL_KEYS | _COMMAND_KEYS.get(args.command, set())
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0] for a in argv
                if a.startswith("--")}
    for key, value in doc.items():
        if key == "command":
            continue
        if key not in explicit:
            setattr(args, key, value)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "check": cmd_check,
        "simulate": cmd_simulate,
        "force": cmd_force,
        "koopman": cmd_koopman,
        "spin": cmd_spin,
        "circuit": cmd_circuit,
    }
    try:
        if args.config:
            _apply_config(args, argv)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        config = {k: v for k, v in vars(args).items() if k != "config"}
        return handlers[args.command](args, out_dir, config)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
