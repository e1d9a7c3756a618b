"""Parzen-window mimic of an arbitrary classifier.

Given reference points labeled by some classifier g, the mimic places a
Gaussian bump of width sigma on every reference and forms weighted class
densities

    joint(x, c) = (1/m) * sum_{i in I_c} k_sigma(x - x_i),
    k_sigma(z)  = exp(-1/2 * z'z / sigma^2) / sqrt(2*pi*sigma^2),

whose ratios give a posterior that mimics g.  The normalizing constant
is the one-dimensional one regardless of d; it cancels in every ratio
below, so the joint is deliberately unnormalized as a d-dim density.

The estimated explanation vector at a query z with label c = g(z) is the
gradient of the "leave the class" posterior p(y != c | x) at x = z.
Writing S_in / S_out for the weight sums over I_c and its complement,
and V_in / V_out for the matching weighted sums of (z - x_i), it has the
closed form

    zeta(z) = (S_out * V_in - S_in * V_out) / (sigma^2 * T^2),  T = S_in + S_out.

This expression is invariant under rescaling all weights by a common
factor, so it is evaluated with weights scaled by the largest one;
that keeps T^2 away from underflow without changing any result.

Far field: when even the largest Gaussian weight underflows to zero in
double precision, densities carry no information.  Posteriors then fall
back to class priors, predictions to the majority class, and explanation
vectors to zero — all flagged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .gpc import ExplanationVector

# log of the smallest positive double: below this, exp() underflows to 0
_UNDERFLOW_LOG = float(np.log(np.finfo(float).smallest_subnormal))


@dataclass
class ParzenMimic:
    """Labeled reference set plus kernel width.  Immutable once built."""

    ref_x: np.ndarray
    ref_labels: np.ndarray
    sigma: float

    def __post_init__(self):
        self.ref_x = np.asarray(self.ref_x, dtype=float)
        self.ref_labels = np.asarray(self.ref_labels, dtype=int)
        if self.ref_x.ndim != 2:
            raise ValueError("ref_x must be an m x d matrix")
        if len(self.ref_labels) != len(self.ref_x):
            raise ValueError("ref_x and ref_labels must have equal length")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        self.classes = np.unique(self.ref_labels)
        self.class_index_sets = {
            int(c): np.flatnonzero(self.ref_labels == c) for c in self.classes
        }

    def majority_class(self) -> int:
        counts = np.array([len(self.class_index_sets[int(c)]) for c in self.classes])
        return int(self.classes[np.argmax(counts)])  # ties: lower class id


def _log_weights(mimic: ParzenMimic, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != mimic.ref_x.shape[1]:
        raise ValueError(
            f"query must be a point of dimension {mimic.ref_x.shape[1]}, got shape {x.shape}"
        )
    diff = x - mimic.ref_x
    return -0.5 * np.sum(diff * diff, axis=1) / mimic.sigma**2


def is_far_field(mimic: ParzenMimic, x) -> bool:
    """True when every Gaussian weight at x underflows double precision."""
    return float(np.max(_log_weights(mimic, x))) < _UNDERFLOW_LOG


def parzen_joint(mimic: ParzenMimic, x, c) -> float:
    """Weighted class density (1/m) sum_{i in I_c} k_sigma(x - x_i)."""
    lw = _log_weights(mimic, x)
    idx = mimic.class_index_sets.get(int(c))
    if idx is None or len(idx) == 0:
        return 0.0
    norm = np.sqrt(2.0 * np.pi) * mimic.sigma
    return float(np.sum(np.exp(lw[idx])) / (norm * len(mimic.ref_x)))


def _scaled_class_sums(mimic: ParzenMimic, x):
    """Per-class weight sums with weights rescaled by the largest one.

    Returns (sums keyed by class, total).  Only ratios of these are
    meaningful.  None when the point is far field.
    """
    lw = _log_weights(mimic, x)
    top = float(np.max(lw))
    if top < _UNDERFLOW_LOG:
        return None
    w = np.exp(lw - top)
    sums = {c: float(np.sum(w[idx])) for c, idx in mimic.class_index_sets.items()}
    return sums, float(np.sum(w))


def parzen_posterior(mimic: ParzenMimic, x, c) -> float:
    """Mimic posterior p(y = c | x); class prior when x is far field."""
    c = int(c)
    scaled = _scaled_class_sums(mimic, x)
    if scaled is None:
        idx = mimic.class_index_sets.get(c)
        return (len(idx) if idx is not None else 0) / len(mimic.ref_x)
    sums, total = scaled
    return sums.get(c, 0.0) / total


def parzen_posterior_not(mimic: ParzenMimic, x, c) -> float:
    """Complement posterior p(y != c | x), defined as 1 - p(y = c | x)."""
    return 1.0 - parzen_posterior(mimic, x, c)


def mimic_predict(mimic: ParzenMimic, x) -> int:
    """Class with maximal posterior; ties and far field go as documented."""
    scaled = _scaled_class_sums(mimic, x)
    if scaled is None:
        return mimic.majority_class()
    sums, _ = scaled
    best = max(sorted(sums), key=lambda c: sums[c])  # ties: lower class id
    return int(best)


def select_width(
    ref_x,
    ref_labels,
    probe_points,
    probe_labels,
    candidate_sigmas,
) -> float:
    """Pick sigma minimizing disagreement with g on the probe points.

    The score of a candidate is the plain count of probes where the
    mimic's prediction differs from the supplied g label; ties go to the
    smaller sigma.  When the probes coincide with the references (same
    points, same labels), each probe's own reference is left out of the
    density — otherwise vanishing widths would win trivially.
    """
    ref_x = np.asarray(ref_x, dtype=float)
    ref_labels = np.asarray(ref_labels, dtype=int)
    probes = np.asarray(probe_points, dtype=float)
    g_labels = np.asarray(probe_labels, dtype=int)
    if len(probes) == 0 or len(ref_x) == 0:
        raise ValueError("reference and probe sets must be nonempty")
    cands = sorted(float(s) for s in candidate_sigmas)
    positive = [s for s in cands if s > 0]
    if not positive:
        raise ValueError("no positive sigma candidate")

    loo = probes.shape == ref_x.shape and np.array_equal(probes, ref_x) and np.array_equal(
        g_labels, ref_labels
    )
    diff = probes[:, None, :] - ref_x[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    classes = np.unique(ref_labels)
    onehot = (ref_labels[:, None] == classes[None, :]).astype(float)
    counts = onehot.sum(axis=0)
    majority = classes[np.argmax(counts)]

    best_sigma, best_count = None, None
    for s in positive:
        lw = -0.5 * sq / s**2
        if loo:
            np.fill_diagonal(lw, -np.inf)
        top = lw.max(axis=1, keepdims=True)
        w = np.where(np.isfinite(lw), np.exp(lw - top), 0.0)
        class_sums = w @ onehot
        pred = classes[np.argmax(class_sums, axis=1)]  # argmax ties: lower class id
        far = top[:, 0] < _UNDERFLOW_LOG
        pred = np.where(far, majority, pred)
        count = int(np.sum(pred != g_labels))
        if best_count is None or count < best_count:
            best_sigma, best_count = s, count
    return best_sigma


def default_sigma_grid(points, count: int = 25, span=(1e-2, 1e2)) -> np.ndarray:
    """Log-spaced candidate widths scaled by the median pairwise distance."""
    P = np.asarray(points, dtype=float)
    diff = P[:, None, :] - P[None, :, :]
    dists = np.sqrt(np.sum(diff * diff, axis=2))
    med = float(np.median(dists[np.triu_indices(len(P), k=1)]))
    if med <= 0:
        med = 1.0
    return med * np.logspace(np.log10(span[0]), np.log10(span[1]), count)


def _quotient_parts(mimic: ParzenMimic, z, c):
    """Rescaled sums entering the explanation quotient at z.

    Returns (S_in, S_out, V_in, V_out, T) or None in the far field.
    """
    z = np.asarray(z, dtype=float)
    lw = _log_weights(mimic, z)
    top = float(np.max(lw))
    if top < _UNDERFLOW_LOG:
        return None
    w = np.exp(lw - top)
    inside = np.zeros(len(w), dtype=bool)
    idx = mimic.class_index_sets.get(int(c))
    if idx is not None:
        inside[idx] = True
    diff = z - mimic.ref_x
    s_in = float(np.sum(w[inside]))
    s_out = float(np.sum(w[~inside]))
    v_in = w[inside] @ diff[inside]
    v_out = w[~inside] @ diff[~inside]
    return s_in, s_out, v_in, v_out, s_in + s_out


def explain_estimated(mimic: ParzenMimic, z, g_label) -> ExplanationVector:
    """Estimated explanation vector at z for the class assigned by g.

    A positive component means increasing that feature increases the
    mimic's probability that the label differs from g_label.  In the far
    field the gradient is identically zero and flagged.
    """
    z = np.asarray(z, dtype=float)
    c = int(g_label)
    parts = _quotient_parts(mimic, z, c)
    if parts is None:
        return ExplanationVector(
            query=z,
            gradient=np.zeros_like(z),
            predicted_probability=parzen_posterior_not(mimic, z, c),
            predicted_label=c,
            source="parzen-mimic",
            far_field=True,
        )
    s_in, s_out, v_in, v_out, total = parts
    gradient = (s_out * v_in - s_in * v_out) / (mimic.sigma**2 * total**2)
    return ExplanationVector(
        query=z,
        gradient=gradient,
        predicted_probability=parzen_posterior_not(mimic, z, c),
        predicted_label=c,
        source="parzen-mimic",
    )


def parzen_hessian(mimic: ParzenMimic, z, c) -> np.ndarray:
    """Analytic Hessian of p(y != c | x) at z.

    With w_i(x) = exp(-|x - x_i|^2 / (2 sigma^2)) the pieces are
    grad w_i = -w_i (x - x_i) / sigma^2 and
    hess w_i = w_i ((x-x_i)(x-x_i)' / sigma^4 - I / sigma^2); the quotient
    rule for O/T (O = outside-class sum, T = total) assembles them.  All
    terms are ratios of equal homogeneity degree, so rescaled weights
    leave the result unchanged.
    """
    z = np.asarray(z, dtype=float)
    parts = _quotient_parts(mimic, z, int(c))
    if parts is None:
        return np.zeros((z.size, z.size))
    lw = _log_weights(mimic, z)
    w = np.exp(lw - float(np.max(lw)))
    diff = z - mimic.ref_x
    s2 = mimic.sigma**2
    inside = np.zeros(len(w), dtype=bool)
    idx = mimic.class_index_sets.get(int(c))
    if idx is not None:
        inside[idx] = True
    out = ~inside
    d = z.size
    eye = np.eye(d)

    def grad_of(mask):
        return -(w[mask] @ diff[mask]) / s2

    def hess_of(mask):
        wd = w[mask, None] * diff[mask]
        return (wd.T @ diff[mask]) / s2**2 - np.sum(w[mask]) / s2 * eye

    T = float(np.sum(w))
    O = float(np.sum(w[out]))
    gT, gO = grad_of(slice(None)), grad_of(out)
    hT, hO = hess_of(slice(None)), hess_of(out)
    return (
        hO / T
        - (np.outer(gO, gT) + np.outer(gT, gO)) / T**2
        - O * hT / T**2
        + 2.0 * O * np.outer(gT, gT) / T**3
    )


def hessian_direction(mimic: ParzenMimic, z, g_label):
    """Fallback direction where the explanation gradient vanishes.

    Returns the top eigenvector of the Hessian of p(y != g_label | x) at
    z (orientation-free; the first nonzero component is made positive)
    together with its eigenvalue.
    """
    z = np.asarray(z, dtype=float)
    H = parzen_hessian(mimic, z, g_label)
    if not np.linalg.norm(H) > 0.0:
        raise ValueError("no informative direction: Hessian is numerically zero")
    eigvals, eigvecs = np.linalg.eigh(H)
    vec = eigvecs[:, -1]
    nonzero = np.flatnonzero(np.abs(vec) > 1e-9)
    if len(nonzero) and vec[nonzero[0]] < 0:
        vec = -vec
    return vec, float(eigvals[-1])


def explain_with_fallback(
    mimic: ParzenMimic, z, g_label, threshold: float = 1e-6
) -> ExplanationVector:
    """explain_estimated, switching to the Hessian direction when the
    gradient norm falls below `threshold` (far-field points stay zero)."""
    ev = explain_estimated(mimic, z, g_label)
    if ev.far_field or np.linalg.norm(ev.gradient) >= threshold:
        return ev
    try:
        direction, _ = hessian_direction(mimic, z, g_label)
    except ValueError:
        return ev
    return ExplanationVector(
        query=ev.query,
        gradient=direction,
        predicted_probability=ev.predicted_probability,
        predicted_label=ev.predicted_label,
        source="hessian-fallback",
    )


def smooth_gradients(queries, gradients, window_halfwidth: float) -> np.ndarray:
    """Sliding-hypercube smoothing of a gradient field.

    Each output is the mean of all gradients whose query lies within the
    axis-aligned cube of the given halfwidth centered at that query (the
    point itself always included).
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    if len(Q) != len(G):
        raise ValueError("queries and gradients must be aligned")
    if not window_halfwidth > 0:
        raise ValueError("window halfwidth must be positive")
    out = np.empty_like(G)
    for i in range(len(Q)):
        mask = np.all(np.abs(Q - Q[i]) <= window_halfwidth, axis=1)
        out[i] = G[mask].mean(axis=0)
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def mimic_to_dict(mimic: ParzenMimic) -> dict:
    return {
        "refs": mimic.ref_x.tolist(),
        "labels": mimic.ref_labels.tolist(),
        "sigma": mimic.sigma,
    }


def mimic_from_dict(obj: dict) -> ParzenMimic:
    return ParzenMimic(
        ref_x=np.asarray(obj["refs"], dtype=float),
        ref_labels=np.asarray(obj["labels"], dtype=int),
        sigma=float(obj["sigma"]),
    )


def save_mimic(mimic: ParzenMimic, path) -> None:
    with open(path, "w") as fh:
        json.dump(mimic_to_dict(mimic), fh, sort_keys=True)
        fh.write("\n")


def load_mimic(path) -> ParzenMimic:
    with open(path) as fh:
        return mimic_from_dict(json.load(fh))


def save_explanations(path, explanations, feature_names=None) -> None:
    """Write explanations as CSV: query coords, gradient coords, predicted
    label, source, far-field flag.  Floats carry 17 significant digits."""
    explanations = list(explanations)
    if not explanations:
        raise ValueError("nothing to save")
    d = explanations[0].query.size
    if feature_names is None:
        feature_names = [f"x{j + 1}" for j in range(d)]
    if len(feature_names) != d:
        raise ValueError(f"expected {d} feature names")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            list(feature_names)
            + [f"grad_{name}" for name in feature_names]
            + ["probability", "label", "source", "far_field"]
        )
        for ev in explanations:
            w.writerow(
                ["%.17g" % v for v in ev.query]
                + ["%.17g" % v for v in ev.gradient]
                + ["%.17g" % ev.predicted_probability, int(ev.predicted_label), ev.source, int(ev.far_field)]
            )


def load_explanations(path):
    """Inverse of save_explanations."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    d = (len(header) - 4) // 2
    out = []
    for row in rows[1:]:
        if not row:
            continue
        out.append(
            ExplanationVector(
                query=np.array([float(v) for v in row[:d]]),
                gradient=np.array([float(v) for v in row[d : 2 * d]]),
                predicted_probability=float(row[2 * d]),
                predicted_label=int(row[2 * d + 1]),
                source=row[2 * d + 2],
                far_field=bool(int(row[2 * d + 3])),
            )
        )
    return out
