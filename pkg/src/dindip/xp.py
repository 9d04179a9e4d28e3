"""Experiment harness: config parsing, seeded instances, the four benchmark
experiments, and CSV/PGM/metadata emission.

All randomness flows through counter-based Philox generators keyed by explicit
seeds; per-instance seeds are derived as seed_base + instance index.  CSV
output uses '.' decimals, 17 significant digits, and LF line endings, so a
fixed config and seed reproduce byte-identical files.  Images are written as
binary PGM (P5, maxval 255).

Parallelism across grid cells/instances is capped by the DINDIP_THREADS
environment variable; results are assembled in job order, so output bytes do
not depend on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import dipnet, flow, inertia, linops, theory


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# serialization helpers


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, columns, rows, units: str | None = None) -> None:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        if units:
            fh.write(f"# units: {units}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a harness CSV back: (column names, float matrix)."""
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    columns = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return columns, data


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM, maxval 255; values are clamped to [0, 255] and rounded."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError("only binary PGM (P5) is supported")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only maxval 255 PGM is supported")
    pos += 1  # single whitespace after maxval
    img = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    return img.reshape(height, width).astype(np.float64)


def write_certificate(path, cert: theory.Certificate) -> None:
    with open(path, "w", newline="\n") as fh:
        for key, value in cert.as_dict().items():
            fh.write(f"{key} = {fmt(value)}\n")


def write_discrete_rate(path, opt_cfg, cert: theory.Certificate, result) -> None:
    """A-priori (s_min = s0) and a-posteriori (realized min step) rate reports."""
    steps = result.column("s_tau")[1:] if len(result.records) > 1 else np.array([opt_cfg.s0])
    realized = float(steps.min()) if steps.size else opt_cfg.s0
    with open(path, "w", newline="\n") as fh:
        for label, s_min in (("a_priori", opt_cfg.s0), ("a_posteriori", realized)):
            report = inertia.rate_constants_discrete(
                opt_cfg, cert.sigmin_j0, cert.sigmin_a, s_min=s_min, loss0=cert.loss0
            )
            fh.write(f"[{label}]\n")
            fh.write(f"s_min = {fmt(report.s_min)}\n")
            fh.write(f"delta1 = {fmt(report.delta1)}\n")
            fh.write(f"delta2 = {fmt(report.delta2)}\n")
            fh.write(f"sigma = {fmt(report.sigma)}\n")
            fh.write(f"r_prime = {fmt(report.r_prime)}\n")
            fh.write(f"rate_rho = {fmt(report.rate_rho)}\n")
            fh.write(f"rate_base = {fmt(report.rate_base)}\n")
            fh.write(f"loss_bound_prefactor = {fmt(report.loss_bound_prefactor)}\n")
            fh.write(f"valid_s0 = {fmt(report.valid_s0)}\n")
            fh.write(f"valid_damping = {fmt(report.valid_damping)}\n")
            fh.write(f"certificate_valid = {fmt(report.certificate_valid)}\n")


def synthetic_image(side: int) -> np.ndarray:
    """Deterministic grayscale test pattern in [0, 255]: diagonal ramp with a
    bright disk and a dark square."""
    idx = np.arange(side, dtype=np.float64)
    yy, xx = np.meshgrid(idx, idx, indexing="ij")
    img = 60.0 + 120.0 * (xx + yy) / (2.0 * max(side - 1, 1))
    disk = (xx - 0.35 * side) ** 2 + (yy - 0.35 * side) ** 2 <= (0.18 * side) ** 2
    img[disk] = 230.0
    lo, hi = int(0.55 * side), int(0.85 * side)
    img[lo:hi, lo:hi] = 25.0
    return img


# ---------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _problem_dim(cfg: dict) -> int:
    sec = _section(cfg, "problem")
    if sec.get("kind", "gaussian") in ("blur", "wellcond"):
        return int(sec.get("side", 16)) ** 2
    return int(sec.get("n", 10))


def build_network(cfg: dict) -> dipnet.DipNetwork:
    sec = _section(cfg, "network")
    try:
        return dipnet.init_network(
            k=int(sec.get("k", 4096)),
            d=int(sec.get("d", 1)),
            n=int(sec["n"]) if "n" in sec else _problem_dim(cfg),
            act=str(sec.get("activation", "sigmoid")),
            seed=int(sec.get("seed", 0)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid [network] section: {exc}") from exc


def build_problem(cfg: dict, net: dipnet.DipNetwork) -> linops.InverseProblem:
    sec = _section(cfg, "problem")
    kind = sec.get("kind", "gaussian")
    seed = int(sec.get("seed", 1))
    noise_std = float(sec.get("noise_std", 0.0))
    target_snr = sec.get("target_snr")
    if kind == "gaussian":
        return linops.make_gaussian_problem(
            n=int(sec.get("n", 10)),
            m=int(sec.get("m", 5)),
            seed=seed,
            noise_std=noise_std,
            target_snr=float(target_snr) if target_snr is not None else None,
        )
    if kind == "identity":
        n = int(sec.get("n", net.n))
        op = linops.IdentityOperator(n)
        rng = np.random.Generator(np.random.Philox(seed))
        if sec.get("x_true", "gaussian") == "near-init":
            # ground truth a small offset away from the initial network output,
            # keeping the initial misfit inside the certified-radius regime
            x0 = dipnet.forward(net, net.theta0)
            direction = rng.standard_normal(n)
            x_true = x0 + float(sec.get("offset", 0.1)) * direction / np.linalg.norm(direction)
        else:
            x_true = rng.standard_normal(n) * float(sec.get("scale", 1.0))
        noise = _draw_noise(rng, op, x_true, noise_std, target_snr)
        return linops.InverseProblem(op=op, x_true=x_true, noise=noise)
    if kind == "blur":
        side = int(sec.get("side", 16))
        op = linops.make_blur_operator(side, float(sec.get("kernel_std", 1.0)))
        x_true = _load_image(sec, side)
        rng = np.random.Generator(np.random.Philox(seed))
        noise = _draw_noise(rng, op, x_true, noise_std, target_snr)
        return linops.InverseProblem(op=op, x_true=x_true, noise=noise)
    if kind == "wellcond":
        side = int(sec.get("side", 16))
        op = linops.make_wellcond_operator(side * side, seed)
        x_true = _load_image(sec, side)
        rng = np.random.Generator(np.random.Philox(seed + 1))
        noise = _draw_noise(rng, op, x_true, noise_std, target_snr)
        return linops.InverseProblem(op=op, x_true=x_true, noise=noise)
    raise ConfigError(f"unknown problem kind {kind!r}")


def _draw_noise(rng, op, x_true, noise_std, target_snr) -> np.ndarray:
    if target_snr is not None:
        direction = rng.standard_normal(op.m)
        scale = np.linalg.norm(op.matvec(x_true)) / (float(target_snr) * np.linalg.norm(direction))
        return direction * scale
    if noise_std > 0.0:
        return rng.standard_normal(op.m) * noise_std
    return np.zeros(op.m)


def _load_image(sec: dict, side: int) -> np.ndarray:
    if "image" in sec:
        img = read_pgm(sec["image"])
        if img.shape != (side, side):
            raise ConfigError(
                f"image {sec['image']} is {img.shape}, expected ({side}, {side})"
            )
    else:
        img = synthetic_image(side)
    return img.ravel()


def build_optimizer_config(cfg: dict) -> inertia.OptimizerConfig:
    sec = _section(cfg, "optimizer")
    stopping = _section(cfg, "stopping")
    try:
        return inertia.OptimizerConfig(
            alpha=float(sec.get("alpha", 0.0)),
            beta=float(sec.get("beta", 0.0)),
            delta=float(sec.get("delta", 1.0)),
            rho=float(sec.get("rho", 0.5)),
            s0=float(sec.get("s0", 0.1)),
            backtrack_mode=str(sec.get("backtrack_mode", "reset")),
            max_iters=int(sec.get("max_iters", 20000)),
            max_backtracks=int(sec.get("max_backtracks", 60)),
            stop_loss_threshold=float(stopping.get("loss_threshold", 1e-14)),
            early_stop_on_noise=bool(stopping.get("early_stop_on_noise", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [optimizer] section: {exc}") from exc


def make_certified_instance(
    n: int, k: int, seed: int, offset: float = 0.08, act: str = "sigmoid", d: int = 16
) -> tuple[dipnet.DipNetwork, linops.InverseProblem, theory.Certificate]:
    """Identity-operator instance whose ground truth sits close to the initial
    network output, so the R' < R initialization certificate holds."""
    net = dipnet.init_network(k=k, d=d, n=n, act=act, seed=seed)
    x0 = dipnet.forward(net, net.theta0)
    rng = np.random.Generator(np.random.Philox(seed + 7919))
    direction = rng.standard_normal(n)
    x_true = x0 + offset * direction / np.linalg.norm(direction)
    problem = linops.InverseProblem(
        op=linops.IdentityOperator(n), x_true=x_true, noise=np.zeros(n)
    )
    cert = theory.certify_continuous(net, net.theta0, problem)
    return net, problem, cert


# ---------------------------------------------------------------------------
# parallel map


def worker_count() -> int:
    env = os.environ.get("DINDIP_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def map_ordered(fn, jobs):
    workers = worker_count()
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# single runs


def _write_meta(out_dir: Path, command: str, cfg_path, extra: dict) -> None:
    from . import __version__

    with open(out_dir / "meta.txt", "w", newline="\n") as fh:
        fh.write(f"dindip_version = {__version__}\n")
        fh.write(f"command = {command}\n")
        for key, value in extra.items():
            fh.write(f"{key} = {fmt(value)}\n")
    if cfg_path is not None:
        with open(cfg_path, "rb") as src:
            (out_dir / "config.toml").write_bytes(src.read())


def run_solve(cfg: dict, out_dir, cfg_path=None) -> inertia.RunResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    net = build_network(cfg)
    problem = build_problem(cfg, net)
    if net.n != problem.op.n:
        raise ConfigError(f"network output dim {net.n} != operator input dim {problem.op.n}")
    opt_cfg = build_optimizer_config(cfg)
    result = inertia.run(net, problem, opt_cfg)
    cert = theory.certify_continuous(net, net.theta0, problem)
    write_csv(
        out_dir / "trajectory.csv",
        inertia.TRAJECTORY_COLUMNS,
        result.records,
        units="tau [iterations], s_tau/i_tau [step-size, halvings], loss/lyapunov [misfit^2], "
        "norms [signal units]",
    )
    write_certificate(out_dir / "certificate.txt", cert)
    if cert.sigmin_j0 > 0:
        write_discrete_rate(out_dir / "discrete_rate.txt", opt_cfg, cert, result)
    _write_meta(out_dir, "solve", cfg_path, {
        "status": result.status,
        "iterations": result.iterations,
        "final_loss": result.state.loss,
        "delta": opt_cfg.delta,
        "rho": opt_cfg.rho,
        "s0": opt_cfg.s0,
        "network_seed": _section(cfg, "network").get("seed", 0),
        "problem_seed": _section(cfg, "problem").get("seed", 1),
    })
    return result


def build_flow_config(cfg: dict, cert: theory.Certificate, problem) -> flow.FlowConfig:
    sec = _section(cfg, "optimizer")
    alpha = sec.get("alpha", "auto")
    beta = sec.get("beta", "auto")
    t_end = sec.get("t_end", "auto")
    alpha = cert.alpha_star if alpha == "auto" else float(alpha)
    beta = cert.beta_star if beta == "auto" else float(beta)
    if t_end == "auto":
        t_end = flow.default_t_end(cert, problem)
    try:
        return flow.FlowConfig(
            alpha=alpha,
            beta=beta,
            t_end=float(t_end),
            h=float(sec.get("h", 0.01)),
            err_tol=float(sec.get("err_tol", 1e-8)),
            record_every=int(sec.get("record_every", 10)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid flow configuration: {exc}") from exc


def run_flow(cfg: dict, out_dir, cfg_path=None) -> flow.FlowResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    net = build_network(cfg)
    problem = build_problem(cfg, net)
    if net.n != problem.op.n:
        raise ConfigError(f"network output dim {net.n} != operator input dim {problem.op.n}")
    cert = theory.certify_continuous(net, net.theta0, problem)
    fcfg = build_flow_config(cfg, cert, problem)
    state = flow.prepare_flow(net, problem, fcfg)
    result = flow.integrate(state, net, problem, fcfg)
    write_csv(
        out_dir / "trajectory.csv",
        flow.FLOW_COLUMNS,
        result.records,
        units="t [1/rate], h [time step], loss/lyapunov [misfit^2], norms [signal units]",
    )
    write_certificate(out_dir / "certificate.txt", cert)
    _write_meta(out_dir, "flow", cfg_path, {
        "alpha": fcfg.alpha,
        "beta": fcfg.beta,
        "t_end": fcfg.t_end,
        "final_loss": result.records[-1][flow.FLOW_COLUMNS.index("loss")],
    })
    return result


def run_theory(cfg: dict, out_dir, cfg_path=None) -> theory.Certificate:
    net = build_network(cfg)
    problem = build_problem(cfg, net)
    cert = theory.certify_continuous(net, net.theta0, problem)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_certificate(out_dir / "certificate.txt", cert)
        _write_meta(out_dir, "theory", cfg_path, {"init_ok": cert.init_ok})
    return cert


# ---------------------------------------------------------------------------
# grid experiments


GRID_AB_COLUMNS = ("alpha", "beta", "mean_iterations", "diverged", "instances", "iter_cap")
GRID_KA_COLUMNS = (
    "k", "alpha", "success_probability", "instances", "iter_cap",
    "problem_seed_base", "network_seed_base",
)


def _grid_defaults(sec: dict) -> dict:
    return {
        "n": int(sec.get("n", 10)),
        "m": int(sec.get("m", 5)),
        "d": int(sec.get("d", 1)),
        "activation": str(sec.get("activation", "sigmoid")),
        "instances": int(sec.get("instances", 10)),
        "s0": float(sec.get("s0", 0.1)),
        "delta": float(sec.get("delta", 1.0)),
        "rho": float(sec.get("rho", 0.5)),
        "loss_threshold": float(sec.get("loss_threshold", 1e-14)),
        "problem_seed_base": int(sec.get("problem_seed_base", 1000)),
        "network_seed_base": int(sec.get("network_seed_base", 2000)),
    }


def _count_iterations(job) -> tuple[int, bool]:
    """(iterations-to-threshold capped at max_iters, diverged flag)."""
    alpha, beta, k, instance, g = job
    problem = linops.make_gaussian_problem(g["n"], g["m"], g["problem_seed_base"] + instance)
    net = dipnet.init_network(
        k=k, d=g["d"], n=g["n"], act=g["activation"], seed=g["network_seed_base"] + instance
    )
    config = inertia.OptimizerConfig(
        alpha=alpha,
        beta=beta,
        delta=g["delta"],
        rho=g["rho"],
        s0=g["s0"],
        max_iters=g["iter_cap"],
        stop_loss_threshold=g["loss_threshold"],
    )
    try:
        result = inertia.run(net, problem, config, record=False)
    except (inertia.BacktrackStallError, dipnet.EvaluationError):
        return g["iter_cap"], True
    if result.status == "diverged":
        return g["iter_cap"], True
    if result.status == "converged":
        return result.iterations, False
    return g["iter_cap"], False


def exp_grid_alpha_beta(cfg: dict, out_dir, cfg_path=None) -> Path:
    """Mean iterations-to-threshold over seeded instances per (alpha, beta)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sec = _section(cfg, "experiment")
    g = _grid_defaults(sec)
    g["k"] = int(sec.get("k", 4096))
    g["iter_cap"] = int(sec.get("iter_cap", 20000))
    alphas = [float(a) for a in sec.get("alphas", [0.0, 10 ** -0.1])]
    betas = [float(b) for b in sec.get("betas", [0.0, 0.05])]
    jobs = [
        (alpha, beta, g["k"], i, g)
        for alpha in alphas
        for beta in betas
        for i in range(g["instances"])
    ]
    outcomes = map_ordered(_count_iterations, jobs)
    rows = []
    idx = 0
    for alpha in alphas:
        for beta in betas:
            cell = outcomes[idx : idx + g["instances"]]
            idx += g["instances"]
            iters = np.array([c[0] for c in cell], dtype=np.float64)
            diverged = sum(1 for c in cell if c[1])
            rows.append((alpha, beta, float(iters.mean()), diverged, g["instances"], g["iter_cap"]))
    path = out_dir / "grid_ab.csv"
    write_csv(path, GRID_AB_COLUMNS, rows,
              units="alpha/beta [damping], mean_iterations [iterations, capped]")
    _write_meta(out_dir, "grid-ab", cfg_path, {
        "instances": g["instances"],
        "delta": g["delta"],
        "rho": g["rho"],
        "s0": g["s0"],
        "problem_seed_base": g["problem_seed_base"],
        "network_seed_base": g["network_seed_base"],
    })
    return path


def exp_grid_k_alpha(cfg: dict, out_dir, cfg_path=None) -> Path:
    """Empirical probability of reaching the loss threshold within the cap,
    per (k, alpha), at fixed beta (default 0.05)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sec = _section(cfg, "experiment")
    g = _grid_defaults(sec)
    g["iter_cap"] = int(sec.get("iter_cap", 15000))
    beta = float(sec.get("beta", 0.05))
    ks = [int(k) for k in sec.get("ks", [8, 4096])]
    alphas = [float(a) for a in sec.get("alphas", [0.0, 0.5, 10 ** -0.1])]
    jobs = [
        (alpha, beta, k, i, g) for k in ks for alpha in alphas for i in range(g["instances"])
    ]
    outcomes = map_ordered(_count_iterations, jobs)
    rows = []
    idx = 0
    for k in ks:
        for alpha in alphas:
            cell = outcomes[idx : idx + g["instances"]]
            idx += g["instances"]
            successes = sum(1 for it, div in cell if not div and it < g["iter_cap"])
            rows.append((
                k, alpha, successes / g["instances"], g["instances"], g["iter_cap"],
                g["problem_seed_base"], g["network_seed_base"],
            ))
    path = out_dir / "grid_ka.csv"
    write_csv(path, GRID_KA_COLUMNS, rows,
              units="k [neurons], alpha [damping], success_probability [fraction]")
    _write_meta(out_dir, "grid-ka", cfg_path, {
        "beta": beta,
        "instances": g["instances"],
        "delta": g["delta"],
        "rho": g["rho"],
        "s0": g["s0"],
    })
    return path


# ---------------------------------------------------------------------------
# imaging experiments


def _imaging_runs(cfg: dict, out_dir: Path, kind: str, cfg_path, command: str) -> None:
    sec = _section(cfg, "experiment")
    side = int(sec.get("side", 16))
    k = int(sec.get("k", 512))
    d = int(sec.get("d", 1))
    act = str(sec.get("activation", "sigmoid"))
    net_seed = int(sec.get("network_seed", 0))
    prob_seed = int(sec.get("problem_seed", 1))
    max_iters = int(sec.get("max_iters", 2000))
    s0 = float(sec.get("s0", 0.1))
    pairs = [(float(a), float(b)) for a, b in sec.get("pairs", [[0.0, 0.0], [1.0, 0.1]])]
    checkpoints = sorted(int(c) for c in sec.get("checkpoints", [max_iters // 10, max_iters]))
    record_every = int(sec.get("record_every", 1))

    n = side * side
    if kind == "blur":
        op = linops.make_blur_operator(side, float(sec.get("kernel_std", 1.0)))
        noise_std = float(sec.get("noise_std", 2.5))
    else:
        op = linops.make_wellcond_operator(n, prob_seed)
        noise_std = float(sec.get("noise_std", 5.0))
    x_true = _load_image(sec, side)
    rng = np.random.Generator(np.random.Philox(prob_seed + 1))
    noise = rng.standard_normal(n) * noise_std if noise_std > 0 else np.zeros(n)
    problem = linops.InverseProblem(op=op, x_true=x_true, noise=noise)
    net = dipnet.init_network(k=k, d=d, n=n, act=act, seed=net_seed)

    write_pgm(out_dir / "x_true.pgm", x_true.reshape(side, side))
    write_pgm(out_dir / "y_obs.pgm", problem.y.reshape(side, side))

    summary = []
    for alpha, beta in pairs:
        tag = f"a{alpha:g}_b{beta:g}"
        config = inertia.OptimizerConfig(
            alpha=alpha, beta=beta, s0=s0, max_iters=max_iters,
            stop_loss_threshold=float(_section(cfg, "stopping").get("loss_threshold", 1e-14)),
        )
        result = inertia.run(
            net, problem, config,
            record=True,
            snapshot_every=0,
            snapshot_at=set(checkpoints),
        )
        rows = result.records[:: max(record_every, 1)]
        if result.records and rows[-1] is not result.records[-1]:
            rows = rows + [result.records[-1]]
        write_csv(out_dir / f"curves_{tag}.csv", inertia.TRAJECTORY_COLUMNS, rows,
                  units="tau [iterations], loss [misfit^2], err_signal [pixel units]")
        for tau, theta in result.snapshot_items:
            try:
                recon = dipnet.forward(net, theta).reshape(side, side)
            except dipnet.EvaluationError:
                continue  # diverged snapshot has no renderable image
            write_pgm(out_dir / f"recon_{tag}_tau{tau}.pgm", recon)
        if result.iterations not in {tau for tau, _ in result.snapshot_items}:
            # early stop can skip later checkpoints; always keep the final image
            try:
                recon = dipnet.forward(net, result.state.theta).reshape(side, side)
                write_pgm(out_dir / f"recon_{tag}_tau{result.iterations}.pgm", recon)
            except dipnet.EvaluationError:
                pass
        err = result.column("err_signal")
        finite = err[np.isfinite(err)]
        min_err = float(finite.min()) if finite.size else float("nan")
        final_err = float(finite[-1]) if finite.size else float("nan")
        # semiconvergence flag: the signal error bottomed out before the end
        semiconvergent = bool(finite.size and final_err > 1.05 * min_err)
        summary.append((alpha, beta, result.status, result.iterations, result.state.loss,
                        min_err, final_err, semiconvergent))
    write_csv(out_dir / "summary.csv",
              ("alpha", "beta", "status", "iterations", "final_loss",
               "min_err_signal", "final_err_signal", "semiconvergent"), summary,
              units="alpha/beta [damping], final_loss [misfit^2], err [pixel units]")
    _write_meta(out_dir, command, cfg_path, {
        "side": side, "k": k, "noise_std": noise_std,
        "checkpoints": " ".join(str(c) for c in checkpoints),
        "network_seed": net_seed, "problem_seed": prob_seed,
    })


def exp_deconv(cfg: dict, out_dir, cfg_path=None) -> None:
    """Circular Gaussian deconvolution benchmark: curve CSVs per damping pair
    plus PGM reconstructions at the configured checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _imaging_runs(cfg, out_dir, "blur", cfg_path, "deconv")


def exp_wellcond(cfg: dict, out_dir, cfg_path=None) -> None:
    """Same protocol with the svd-composed well-conditioned operator."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _imaging_runs(cfg, out_dir, "wellcond", cfg_path, "wellcond")
