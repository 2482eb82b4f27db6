"""Per-iteration run records, direction histories, and their JSON form.

Every solver in the package returns an :class:`IterateTrace`. Fields that a
particular solver does not produce (for example sigma for the conjugate
gradient baseline) stay ``None`` and serialize as JSON null.
"""

import json
from dataclasses import dataclass, field

import numpy as np

CONVERGED = "converged"
MAX_ITER = "max-iter"
BREAKDOWN = "breakdown"

TRACE_SCHEMA = "qnsubspace-trace-v1"


def _vec(x):
    return None if x is None else np.asarray(x, dtype=float)


def _vec_list(x):
    return None if x is None else [float(v) for v in np.asarray(x).ravel()]


@dataclass
class IterateRecord:
    """State recorded at one iteration, taken at the start of the step.

    ``x``, ``g`` and ``p`` describe the step from iterate k; ``q``,
    ``newton_step`` and their Hessian images describe the direction split
    computed after the step was taken. ``collapsed`` marks iterations whose
    rebuilt approximation used a single spanning column, ``exhausted`` marks
    iterations where the new conjugate direction vanished because the
    generated subspace was already complete.
    """

    k: int
    x: np.ndarray
    g: np.ndarray
    p: np.ndarray
    alpha: float
    grad_norm: float
    h_p: np.ndarray | None = None
    q: np.ndarray | None = None
    newton_step: np.ndarray | None = None
    h_q: np.ndarray | None = None
    h_newton_step: np.ndarray | None = None
    sigma: float | None = None
    collapsed: bool | None = None
    exhausted: bool | None = None

    def to_dict(self):
        return {
            "k": self.k,
            "x": _vec_list(self.x),
            "g": _vec_list(self.g),
            "p": _vec_list(self.p),
            "alpha": float(self.alpha),
            "grad_norm": float(self.grad_norm),
            "h_p": _vec_list(self.h_p),
            "q": _vec_list(self.q),
            "pN": _vec_list(self.newton_step),
            "h_q": _vec_list(self.h_q),
            "h_pN": _vec_list(self.h_newton_step),
            "sigma": None if self.sigma is None else float(self.sigma),
            # plain bool: numpy's bool type is not JSON serializable
            "collapsed": None if self.collapsed is None else bool(self.collapsed),
            "exhausted": None if self.exhausted is None else bool(self.exhausted),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            k=int(d["k"]),
            x=_vec(d["x"]),
            g=_vec(d["g"]),
            p=_vec(d["p"]),
            alpha=float(d["alpha"]),
            grad_norm=float(d["grad_norm"]),
            h_p=_vec(d.get("h_p")),
            q=_vec(d.get("q")),
            newton_step=_vec(d.get("pN")),
            h_q=_vec(d.get("h_q")),
            h_newton_step=_vec(d.get("h_pN")),
            sigma=d.get("sigma"),
            collapsed=d.get("collapsed"),
            exhausted=d.get("exhausted"),
        )


@dataclass
class IterateTrace:
    """Full record of a solver run: per-iteration records plus terminal state."""

    records: list = field(default_factory=list)
    status: str = MAX_ITER
    iterations: int = 0
    reason: str = ""
    final_x: np.ndarray | None = None
    final_grad_norm: float | None = None
    meta: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED

    def to_dict(self):
        return {
            "schema": TRACE_SCHEMA,
            "meta": self.meta,
            # one object per iteration lives under this key
            "iterations": [r.to_dict() for r in self.records],
            "status": {
                "kind": self.status,
                "iterations": self.iterations,
                "reason": self.reason or None,
            },
            "final": {
                "x": _vec_list(self.final_x),
                "grad_norm": None
                if self.final_grad_norm is None
                else float(self.final_grad_norm),
            },
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d):
        status = d["status"]
        final = d.get("final", {})
        return cls(
            records=[IterateRecord.from_dict(r) for r in d["iterations"]],
            status=status["kind"],
            iterations=int(status["iterations"]),
            reason=status.get("reason") or "",
            final_x=_vec(final.get("x")),
            final_grad_norm=final.get("grad_norm"),
            meta=d.get("meta", {}),
            warnings=list(d.get("warnings", [])),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class DirectionHistory:
    """An ordered set of directions together with their Hessian images."""

    directions: list = field(default_factory=list)
    h_images: list = field(default_factory=list)

    def append(self, p, h_p):
        p = np.asarray(p, dtype=float)
        h_p = np.asarray(h_p, dtype=float)
        if p.shape != h_p.shape:
            raise ValueError("direction and Hessian image must have equal shapes")
        self.directions.append(p)
        self.h_images.append(h_p)

    def __len__(self):
        return len(self.directions)

    def matrices(self):
        """Stack into (P, HP) with one column per direction."""
        if not self.directions:
            return None, None
        return np.column_stack(self.directions), np.column_stack(self.h_images)

    def conjugacy_defect(self):
        """max over i != j of |p_i^T H p_j| / (||H p_i|| ||p_j||); 0.0 if < 2 directions."""
        m = len(self.directions)
        worst = 0.0
        for i in range(m):
            hi = self.h_images[i]
            nhi = np.linalg.norm(hi)
            for j in range(m):
                if i == j:
                    continue
                pj = self.directions[j]
                denom = nhi * np.linalg.norm(pj)
                if denom == 0.0:
                    continue
                worst = max(worst, abs(float(hi @ pj)) / denom)
        return worst
