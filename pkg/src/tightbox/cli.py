"""Experiment command line: every command writes one self-describing CSV.

Parameters are ``key=value`` tokens (lists comma-separated); a spec file with
the same lines plus ``command=<name>`` can replace argv via ``--spec FILE``.
Unknown keys are rejected.  Each CSV starts with comment lines carrying the
artifact version and the fully resolved parameter set (defaults included), so
a run is reproducible from its own output; fixed seeds give byte-identical
files.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .certify import certify_batch
from .datasets import DatasetHandle, data_dir, gen_toy2d, load_mnist_split
from .dln import (
    Dln,
    global_tightness,
    is_propagation_invariant_2layer,
    local_tightness_batch,
    non_invariance_witness,
    random_non_pi_dln,
    random_pi_dln,
    synthesize_pi_signs,
)
from .init_scaling import (
    SQRT2,
    depth_tightness_bound,
    init_tightness,
    mc_linear_init_tightness,
    mc_relu_tightness_factor,
)
from .nets import build_cnn3, build_mlp, forward_batch, load_net, save_net
from .reconstruction import mc_reconstruction, theory_optimal_growth
from .rng import Rng
from .training import TrainConfig, train


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter schemas


@dataclass(frozen=True)
class Param:
    kind: str  # int | float | str | ints | floats
    default: object = None
    required: bool = False


def _parse_value(key: str, raw: str, kind: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            return tuple(int(tok) for tok in raw.split(",") if tok != "")
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok != "")
        return raw
    except ValueError as exc:
        raise UsageError(f"cannot parse {key}={raw!r} as {kind}") from exc


def parse_params(tokens: list[str], schema: dict[str, Param]) -> dict:
    values: dict = {}
    for token in tokens:
        if "=" not in token:
            raise UsageError(f"expected key=value, got {token!r}")
        key, raw = token.split("=", 1)
        if key not in schema:
            raise UsageError(f"unknown parameter {key!r} (valid: {', '.join(sorted(schema))})")
        if key in values:
            raise UsageError(f"duplicate parameter {key!r}")
        values[key] = _parse_value(key, raw, schema[key].kind)
    for key, spec in schema.items():
        if key not in values:
            if spec.required:
                raise UsageError(f"missing required parameter {key!r}")
            values[key] = spec.default
    return values


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_csv(path, command: str, params: dict, columns: list[str], rows: list[tuple]):
    lines = [
        f"# tightbox {__version__}",
        f"# command={command}",
        "# " + " ".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items())),
        ",".join(columns),
    ]
    lines.extend(",".join(_fmt(cell) for cell in row) for row in rows)
    payload = ("\n".join(lines) + "\n").encode()
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


# ---------------------------------------------------------------------------
# dataset / model plumbing shared by the training-flavoured commands

_COMMON_DATA = {
    "dataset": Param("str", "mnist"),
    "data_dir": Param("str", ""),
    "limit": Param("int", 4000),
    "seed": Param("int", 0),
    "out": Param("str", None),
}


def _load_dataset(params: dict, split: str) -> DatasetHandle:
    name = params["dataset"]
    root = params["data_dir"] or None
    limit = params["limit"]
    if name == "mnist":
        try:
            return load_mnist_split(split, root, limit)
        except FileNotFoundError as exc:
            raise RuntimeError(
                f"MNIST IDX files not found under {data_dir(root)} "
                f"(set TIGHTBOX_DATA_DIR or run scripts/make_dataset.py): {exc}"
            ) from None
    if name == "toy2d":
        stream = 7 if split == "train" else 8
        return gen_toy2d(Rng(params["seed"], stream), max(limit, 2))
    raise UsageError(f"unknown dataset {name!r} (valid: mnist, toy2d)")


def _build_net(params: dict, data: DatasetHandle):
    classes = int(data.labels.max()) + 1
    net_rng = Rng(params["seed"], 3)
    if params["arch"] == "mlp":
        return build_mlp(net_rng, data.inputs.shape[1], list(params["hidden"]), classes)
    if params["arch"] == "cnn3":
        if data.image_shape is None:
            raise UsageError("arch=cnn3 needs image data")
        return build_cnn3(net_rng, data.image_shape, classes)
    raise UsageError(f"unknown arch {params['arch']!r} (valid: mlp, cnn3)")


_TRAIN_PARAMS = {
    **_COMMON_DATA,
    "method": Param("str", "IBP"),
    "eps": Param("float", 0.1),
    "lambda": Param("float", None),
    "epochs": Param("int", 10),
    "batch_size": Param("int", 32),
    "lr": Param("float", 5e-3),
    "lr_decay_epochs": Param("ints", (8, 9)),
    "lr_decay_factor": Param("float", 0.2),
    "optimizer": Param("str", "adam"),
    "grad_clip": Param("float", 10.0),
    "warmup_epochs": Param("int", 1),
    "anneal_epochs": Param("int", 5),
    "pgd_steps": Param("int", 8),
    "pgd_step_size": Param("float", None),
    "pgd_restarts": Param("int", 1),
    "eval_subset": Param("int", 512),
    "arch": Param("str", "mlp"),
    "hidden": Param("ints", (64, 64)),
}


def _train_config(params: dict, seed: int | None = None, method: str | None = None, eps: float | None = None, lam=None):
    return TrainConfig(
        method=method if method is not None else params["method"],
        eps_target=eps if eps is not None else params["eps"],
        sabr_lambda=lam if lam is not None else params["lambda"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        lr=params["lr"],
        lr_decay_epochs=tuple(params["lr_decay_epochs"]),
        lr_decay_factor=params["lr_decay_factor"],
        optimizer=params["optimizer"],
        grad_clip_l2=params["grad_clip"],
        warmup_epochs=params["warmup_epochs"],
        anneal_epochs=params["anneal_epochs"],
        pgd_steps=params["pgd_steps"],
        pgd_step_size=params["pgd_step_size"],
        pgd_restarts=params["pgd_restarts"],
        seed=seed if seed is not None else params["seed"],
        eval_subset=params["eval_subset"],
    )


# ---------------------------------------------------------------------------
# commands


def cmd_init_width_sweep(params):
    rows = []
    for i, d1 in enumerate(params["d1"]):
        est = mc_linear_init_tightness(
            Rng(params["seed"], 100 + i),
            (params["d0"], d1, params["d2"]),
            (1.0, 1.0),
            params["samples"],
        )
        rows.append((d1, init_tightness(d1), est.mc_mean, est.mc_stderr))
    return ["d1", "tau_analytic", "tau_mc", "stderr"], rows


def cmd_init_depth_sweep(params):
    rows = []
    width = params["width"]
    for i, depth in enumerate(params["depth"]):
        est = mc_linear_init_tightness(
            Rng(params["seed"], 200 + i),
            (width,) * (depth + 1),
            (1.0,) * depth,
            params["samples"],
        )
        bound = depth_tightness_bound(init_tightness(width), depth)
        rows.append((depth, width, est.mc_mean, est.mc_stderr, bound))
    return ["depth", "width", "tau_mc", "stderr", "tau_bound"], rows


def cmd_relu_factor(params):
    est = mc_relu_tightness_factor(
        Rng(params["seed"], 300), params["d0"], params["d1"], params["d2"], params["samples"]
    )
    row = (params["d0"], params["d1"], params["d2"], params["samples"], est.mc_mean, est.mc_stderr, SQRT2)
    return ["d0", "d1", "d2", "samples", "ratio_mc", "stderr", "ratio_theory"], [row]


def cmd_reconstruction_sweep(params):
    rows = []
    for i, k in enumerate(params["k"]):
        res = mc_reconstruction(Rng(params["seed"], 400 + i), params["d"], k, params["samples"])
        rows.append((k, res.layerwise_growth, res.optimal_growth, res.c_estimate, theory_optimal_growth(k)))
    return ["k", "layerwise_growth", "optimal_growth", "c_estimate", "theory_optimal"], rows


def cmd_train(params):
    data = _load_dataset(params, "train")
    net = _build_net(params, data)
    report = train(net, data, _train_config(params))
    if params["model_out"]:
        save_net(report.net, params["model_out"])
    rows = [(m.epoch, m.train_loss, m.std_acc, m.cert_acc, m.mean_tightness) for m in report.epochs]
    return ["epoch", "train_loss", "std_acc", "cert_acc", "mean_tightness"], rows


def cmd_tightness_eval(params):
    data = _load_dataset(params, params["split"])
    net = load_net(params["model"])
    preds = np.argmax(forward_batch(net, data.inputs), axis=1)
    std_acc = float(np.mean(preds == data.labels))
    tight = float(local_tightness_batch(net, data.inputs).mean())
    rows = []
    for eps in params["eps"]:
        cert = float(certify_batch(net, data.inputs, eps, data.labels).mean())
        rows.append((eps, std_acc, cert, tight))
    return ["eps", "std_acc", "cert_acc", "mean_local_tightness"], rows


def cmd_sabr_xi_sweep(params):
    data = _load_dataset(params, "train")
    rows = []
    for lam in params["lambda"]:
        for eps in params["eps"]:
            net = _build_net(params, data)
            report = train(net, data, _train_config(params, method="SABR", eps=eps, lam=lam))
            last = report.epochs[-1]
            rows.append((lam, eps, lam * eps, last.std_acc, last.cert_acc, last.mean_tightness))
    return ["lambda", "eps", "xi", "std_acc", "cert_acc", "mean_tightness"], rows


def cmd_pi_audit(params):
    d0, d1, d2 = params["d0"], params["d1"], params["d2"]
    tol = params["tol"]
    base = Rng(params["seed"], 500)
    gen = base.generator()

    def audit(dlns):
        sign_pi = tau_pi = disagree = 0
        for f in dlns:
            w1, w2 = f.weights
            check = is_propagation_invariant_2layer(w2, w1).overall
            report = global_tightness(f, np.ones(f.in_dim))
            by_tau = bool(np.all(report.tau >= 1.0 - tol))
            sign_pi += check
            tau_pi += by_tau
            disagree += check != by_tau
        return sign_pi, tau_pi, disagree

    randoms = [
        Dln((gen.standard_normal((d1, d0)), gen.standard_normal((d2, d1))))
        for _ in range(params["n_random"])
    ]
    pis = [random_pi_dln(base.substream(i), d2, d1, d0) for i in range(params["n_pi"])]
    nonpis = [random_non_pi_dln(base.substream(10**6 + i), d2, d1, d0) for i in range(params["n_nonpi"])]
    witness_clean = sum(
        non_invariance_witness(synthesize_pi_signs(rs, cs)) is None
        for rs, cs in _sign_borders(gen, params["n_pi"], d0)
    )
    rows = []
    for name, group in (("random", randoms), ("synthesized-pi", pis), ("forced-non-pi", nonpis)):
        sign_pi, tau_pi, disagree = audit(group)
        rows.append((name, len(group), sign_pi, tau_pi, disagree))
    rows.append(("pi-sign-witness-clean", params["n_pi"], witness_clean, witness_clean, params["n_pi"] - witness_clean))
    return ["category", "count", "sign_pi", "tau_pi", "disagreements"], rows


def _sign_borders(gen, count: int, d: int):
    for _ in range(count):
        row = np.where(gen.random(d) < 0.5, -1.0, 1.0)
        col = np.where(gen.random(d) < 0.5, -1.0, 1.0)
        col[0] = row[0]
        yield row, col


def cmd_certify_batch(params):
    data = _load_dataset(params, params["split"])
    net = load_net(params["model"])
    preds = np.argmax(forward_batch(net, data.inputs), axis=1)
    certified = certify_batch(net, data.inputs, params["eps"], data.labels)
    rows = [
        (i, int(data.labels[i]), int(preds[i]), int(certified[i]))
        for i in range(len(data))
    ]
    return ["index", "label", "predicted", "certified"], rows


COMMANDS = {
    "init-width-sweep": (
        cmd_init_width_sweep,
        {
            "d1": Param("ints", required=True),
            "d0": Param("int", 32),
            "d2": Param("int", 32),
            "samples": Param("int", 20000),
            "seed": Param("int", 0),
            "out": Param("str", None),
        },
    ),
    "init-depth-sweep": (
        cmd_init_depth_sweep,
        {
            "depth": Param("ints", required=True),
            "width": Param("int", 16),
            "samples": Param("int", 10000),
            "seed": Param("int", 0),
            "out": Param("str", None),
        },
    ),
    "relu-factor": (
        cmd_relu_factor,
        {
            "d0": Param("int", 64),
            "d1": Param("int", 64),
            "d2": Param("int", 64),
            "samples": Param("int", 5000),
            "seed": Param("int", 0),
            "out": Param("str", None),
        },
    ),
    "reconstruction-sweep": (
        cmd_reconstruction_sweep,
        {
            "d": Param("int", 200),
            "k": Param("ints", required=True),
            "samples": Param("int", 1000),
            "seed": Param("int", 0),
            "out": Param("str", None),
        },
    ),
    "train": (cmd_train, {**_TRAIN_PARAMS, "model_out": Param("str", None)}),
    "tightness-eval": (
        cmd_tightness_eval,
        {
            **_COMMON_DATA,
            "model": Param("str", required=True),
            "split": Param("str", "test"),
            "eps": Param("floats", required=True),
        },
    ),
    "sabr-xi-sweep": (
        cmd_sabr_xi_sweep,
        {**_TRAIN_PARAMS, "lambda": Param("floats", required=True), "eps": Param("floats", required=True)},
    ),
    "pi-audit": (
        cmd_pi_audit,
        {
            "n_random": Param("int", 1000),
            "n_pi": Param("int", 100),
            "n_nonpi": Param("int", 100),
            "d0": Param("int", 4),
            "d1": Param("int", 6),
            "d2": Param("int", 5),
            "tol": Param("float", 1e-9),
            "seed": Param("int", 0),
            "out": Param("str", None),
        },
    ),
    "certify-batch": (
        cmd_certify_batch,
        {
            **_COMMON_DATA,
            "model": Param("str", required=True),
            "split": Param("str", "test"),
            "eps": Param("float", 0.1),
        },
    ),
}


def _usage() -> str:
    names = "\n  ".join(sorted(COMMANDS))
    return (
        "usage: tightbox <command> [key=value ...]\n"
        "       tightbox --spec FILE      (key=value lines incl. command=<name>)\n"
        f"commands:\n  {names}\n"
    )


def _read_spec_file(path) -> tuple[str, list[str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read spec file {path}: {exc}") from None
    tokens = [line.strip() for line in text.splitlines() if line.strip() and not line.strip().startswith("#")]
    command = None
    rest = []
    for token in tokens:
        if token.startswith("command="):
            command = token.split("=", 1)[1]
        else:
            rest.append(token)
    if command is None:
        raise UsageError("spec file must contain a command=<name> line")
    return command, rest


def run_experiment(command: str, tokens: list[str]) -> Path:
    """Parse, run, and persist one experiment; returns the CSV path."""
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}\n{_usage()}")
    fn, schema = COMMANDS[command]
    params = parse_params(tokens, schema)
    if not params.get("out"):
        params["out"] = f"{command}.csv"
    columns, rows = fn(params)
    write_csv(params["out"], command, params, columns, rows)
    return Path(params["out"])


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_usage(), end="")
        return 0 if argv else 2
    try:
        if argv[0] == "--spec":
            if len(argv) != 2:
                raise UsageError("--spec takes exactly one file argument")
            command, tokens = _read_spec_file(argv[1])
        elif argv[0].startswith("@"):
            command, tokens = _read_spec_file(argv[0][1:])
        else:
            command, tokens = argv[0], argv[1:]
        out = run_experiment(command, tokens)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
