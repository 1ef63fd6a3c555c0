"""Fixed-step explicit-Euler closed-loop simulation of plant + MGSTA."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, DimensionError, DivergenceError
from .lyapunov import LyapCert, lyap_value, zeta_coords
from .sta import StaParams, control_and_derivative


@dataclass
class Scenario:
    """Everything needed for one run.

    ``model`` is a :class:`~mgsta.plants.RobotModel` or
    :class:`~mgsta.plants.AcademicModel` (anything with the same methods).
    """

    model: object
    sta: StaParams
    dt: float = 1e-3
    horizon: float = 10.0
    v0: tuple | None = None
    cert: LyapCert | None = None
    eps: float = 1e-2
    hold: float | None = None
    divergence_limit: float = 1e8

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ContractError(f"dt must be > 0, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ContractError("horizon must be >= dt")
        if not self.eps > 0:
            raise ContractError("eps must be > 0")
        if self.v0 is not None and len(self.v0) != self.model.n:
            raise DimensionError(f"v0 needs {self.model.n} entries")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class Trace:
    """Per-step record on a uniform grid.

    ``state`` is the simulation state, ``recorded`` the part exported to CSV
    (``q`` for the robot), ``z`` the plant's evaluation coordinates.
    """

    t: np.ndarray
    state: np.ndarray
    recorded: np.ndarray
    ref: np.ndarray
    z: np.ndarray
    s: np.ndarray
    v: np.ndarray
    u: np.ndarray
    norm_s: np.ndarray
    V: np.ndarray | None
    state_names: tuple[str, ...]
    ref_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.s.shape[1]

    def columns(self) -> list[str]:
        n = self.n
        cols = ["t", *self.state_names, *self.ref_names]
        for p in ("s", "v", "u"):
            cols += [f"{p}{i + 1}" for i in range(n)]
        cols.append("norm_s")
        if self.V is not None:
            cols.append("V")
        return cols

    def table(self) -> np.ndarray:
        parts = [self.t[:, None], self.recorded, self.ref, self.s, self.v, self.u,
                 self.norm_s[:, None]]
        if self.V is not None:
            parts.append(self.V[:, None])
        return np.hstack(parts)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns()) + "\n")
        np.savetxt(buf, self.table(), fmt="%.17g", delimiter=",")
        return buf.getvalue()

    def to_csv(self, path) -> None:
        write_atomic(path, self.to_csv_text())


@dataclass
class RunSummary:
    converged: bool
    t_conv: float | None
    max_norm_s_after: float | None
    max_norm_u: float
    diverged: bool
    steps: int
    dt: float
    final_norm_s: float

    def to_dict(self) -> dict:
        return asdict(self)


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename.

    Existing non-regular targets (devices, pipes) are written directly.
    """
    path = os.fspath(path)
    if os.path.exists(path) and not os.path.isfile(path):
        with open(path, "w") as fh:
            fh.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def euler_step(state, derivative: Callable[[np.ndarray], np.ndarray], dt: float,
               t: float = 0.0) -> np.ndarray:
    """``state + dt * derivative(state)``.

    Raises:
        DivergenceError: if the derivative or the new state is not finite.
    """
    if not dt > 0:
        raise ContractError("dt must be > 0")
    state = np.asarray(state, dtype=float)
    d = np.asarray(derivative(state), dtype=float)
    new = state + dt * d
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(new))):
        raise DivergenceError(f"non-finite state at t = {t:.6g}", t)
    return new


def detect_convergence(t, norm_s, eps: float, hold: float | None = None) -> float | None:
    """Earliest ``t_k`` with ``norm_s <= eps`` on ``[t_k, t_k + hold]``.

    ``hold=None`` means the remainder of the record.  Windows that would run
    past the end of the record do not count.  Returns None if no such time.
    """
    if not eps > 0:
        raise ContractError("eps must be > 0")
    t = np.asarray(t, dtype=float)
    bad = np.asarray(norm_s, dtype=float) > eps
    N = t.size
    if N == 0:
        return None
    if hold is None:
        hits = np.flatnonzero(bad)
        if hits.size == 0:
            return float(t[0])
        k = hits[-1] + 1
        return float(t[k]) if k < N else None
    cum = np.concatenate([[0], np.cumsum(bad)])
    end = np.searchsorted(t, t + hold, side="right")  # exclusive window end
    tol = 1e-9 * max(1.0, abs(t[-1]))
    fits = t + hold <= t[-1] + tol
    ok = fits & (cum[end] - cum[:N] == 0)
    k = np.flatnonzero(ok)
    return float(t[k[0]]) if k.size else None


def run(scenario: Scenario) -> tuple[Trace, RunSummary]:
    """Integrate the closed loop with explicit Euler and record every step.

    Plant state and integrator ``v`` are advanced jointly.  The sample at
    ``t_k`` holds the state, the sliding variable and the control applied on
    ``[t_k, t_k + dt)``.

    Raises:
        DivergenceError: if values become non-finite or exceed
            ``divergence_limit``; ``trace`` holds the samples so far.
    """
    sc, model, sp = scenario, scenario.model, scenario.sta
    N, dt, n = sc.steps, sc.dt, model.n
    x = model.initial_state()
    v = np.zeros(n) if sc.v0 is None else np.asarray(sc.v0, dtype=float).copy()
    t = np.arange(N + 1) * dt
    X = np.empty((N + 1, x.size))
    S = np.empty((N + 1, n))
    Vs = np.empty((N + 1, n))
    U = np.empty((N + 1, n))

    for k in range(N + 1):
        tk = t[k]
        s = model.sliding(tk, x)
        u, v_dot = control_and_derivative(s, v, model.nominal_G0(tk, x), sp)
        X[k], S[k], Vs[k], U[k] = x, s, v, u
        big = max(np.max(np.abs(x)), np.max(np.abs(v)), np.max(np.abs(u)))
        if not np.isfinite(big) or big > sc.divergence_limit:
            partial = _make_trace(model, sc, t[:k + 1], X[:k + 1], S[:k + 1],
                                  Vs[:k + 1], U[:k + 1], with_v=False)
            raise DivergenceError(f"simulation diverged at t = {tk:.6g}", float(tk), partial)
        if k == N:
            break
        try:
            x = euler_step(x, lambda y: model.derivative(tk, y, u), dt, tk)
        except DivergenceError as e:
            e.trace = _make_trace(model, sc, t[:k + 1], X[:k + 1], S[:k + 1],
                                  Vs[:k + 1], U[:k + 1], with_v=False)
            raise
        v = v + dt * v_dot

    trace = _make_trace(model, sc, t, X, S, Vs, U, with_v=True)
    return trace, summarize(trace, sc)


def _make_trace(model, sc: Scenario, t, X, S, Vs, U, with_v: bool) -> Trace:
    z = model.uncertain_state(t, X) if len(t) else np.empty((0, 0))
    V = None
    if with_v and sc.cert is not None:
        plant = model.uncertain_plant(sc.sta)
        V = lyap_value(zeta_coords(t, z, Vs, plant, sc.sta), sc.cert)
    return Trace(
        t=t, state=X, recorded=model.recorded(X), ref=model.reference(t), z=z,
        s=S, v=Vs, u=U, norm_s=np.linalg.norm(S, axis=-1), V=V,
        state_names=tuple(model.state_names), ref_names=tuple(model.ref_names),
    )


def summarize(trace: Trace, sc: Scenario) -> RunSummary:
    t_conv = detect_convergence(trace.t, trace.norm_s, sc.eps, sc.hold)
    after = None
    if t_conv is not None:
        after = float(np.max(trace.norm_s[trace.t >= t_conv - 0.5 * sc.dt]))
    return RunSummary(
        converged=t_conv is not None,
        t_conv=t_conv,
        max_norm_s_after=after,
        max_norm_u=float(np.max(np.linalg.norm(trace.u, axis=-1))),
        diverged=False,
        steps=int(trace.t.size - 1),
        dt=sc.dt,
        final_norm_s=float(trace.norm_s[-1]),
    )


def read_trace_csv(path, model, sp: StaParams | None = None) -> Trace:
    """Load a trace written by :meth:`Trace.to_csv` for ``model``.

    Raises:
        ContractError: if the header does not match the model's columns or
            a row is incomplete or non-numeric.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    if not text:
        raise ContractError("trace file is empty")
    if not text.endswith("\n"):
        raise ContractError("trace file is truncated (no final newline)")
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    n = model.n
    names = ["t", *model.state_names, *model.ref_names]
    for p in ("s", "v", "u"):
        names += [f"{p}{i + 1}" for i in range(n)]
    names.append("norm_s")
    has_v = header == names + ["V"]
    if header != names and not has_v:
        raise ContractError(f"trace header {header} does not match expected {names}[,V]")
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ContractError(f"trace line {i}: expected {width} fields, got {len(row)}")
        try:
            data[i - 2] = [float(x) for x in row]
        except ValueError as e:
            raise ContractError(f"trace line {i}: {e}") from None
    if data.shape[0] < 2:
        raise ContractError("trace needs at least two samples")
    if not np.all(np.isfinite(data)):
        raise ContractError("trace contains non-finite values")
    t = data[:, 0]
    c = 1
    ns, nr = len(model.state_names), len(model.ref_names)
    rec = data[:, c:c + ns]; c += ns
    ref = data[:, c:c + nr]; c += nr
    s = data[:, c:c + n]; c += n
    v = data[:, c:c + n]; c += n
    u = data[:, c:c + n]; c += n
    norm_s = data[:, c]
    V = data[:, c + 1] if has_v else None
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-6, atol=1e-12) or dts[0] <= 0:
        raise ContractError("trace time grid is not uniform")
    state = model.state_from_record(t, rec, s)
    return Trace(t=t, state=state, recorded=rec, ref=ref, z=model.uncertain_state(t, state),
                 s=s, v=v, u=u, norm_s=norm_s, V=V, state_names=tuple(model.state_names),
                 ref_names=tuple(model.ref_names))
