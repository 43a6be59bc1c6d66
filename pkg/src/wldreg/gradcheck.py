"""Finite-difference checks of every analytic gradient in the package.

Each component is evaluated on a few small seeded instances. The error of
one instance is ``max|analytic - numeric| / max|numeric|`` (central
differences, step 1e-6); a component reports the worst instance.

The Det gradient is taken at S + eps*I while its value is not, which biases
the gradient by roughly ``eps * trace((S + eps*I)^-1)`` relative. Det
instances therefore get that much extra tolerance, capped at 1e-4.
"""

from dataclasses import dataclass, field

import numpy as np

from . import diversity, linalg, network
from .diversity import RegularizerSpec, Variant
from .similarity import pairwise_similarity, similarity_backward

STEP = 1e-6
# Ceiling on the extra tolerance granted to Det near singular S.
DET_SLACK_CAP = 1e-4
SIZES = [(1, 2), (2, 3), (5, 8), (2, 8), (5, 3)]


def numeric_grad(f, x, step=STEP):
    """Central differences of the scalar function ``f`` at ``x`` (any shape)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return g


def relative_error(analytic, numeric):
    scale = max(float(np.max(np.abs(numeric), initial=0.0)), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def untied_activations(rng, m, c, low=-2.0, high=2.0, gap=1e-3):
    """Random activations whose per-sample unit values are at least ``gap`` apart."""
    while True:
        acts = rng.uniform(low, high, size=(m, c))
        srt = np.sort(acts, axis=1)
        if c < 2 or np.min(np.diff(srt, axis=1)) > gap:
            return acts


@dataclass
class ComponentResult:
    name: str
    max_error: float
    passed: bool
    slack: float = 0.0


@dataclass
class GradcheckReport:
    tolerance: float
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def format(self):
        lines = [f"gradcheck tolerance {self.tolerance:g}"]
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            extra = f"  (det slack {r.slack:.1e})" if r.slack else ""
            lines.append(f"  {status}  {r.name:<18} max rel err {r.max_error:.3e}{extra}")
        lines.append("all passed" if self.passed else "FAILED")
        return "\n".join(lines)


def _det_slack(s, epsilon=diversity.DEFAULT_EPSILON):
    jittered = linalg.cholesky(s, epsilon)
    return min(epsilon * float(np.trace(jittered.inverse())), DET_SLACK_CAP)


def _sim_instances(seed, smooth):
    rng = np.random.default_rng(seed)
    for m, c in SIZES:
        acts = untied_activations(rng, m, c)
        weights = rng.normal(size=(c, c))
        gamma = rng.uniform(0.5, 2.0)

        def f(a, w=weights, g=gamma):
            return float(np.sum(w * pairwise_similarity(a, g, smooth).s))

        sim = pairwise_similarity(acts, gamma, smooth)
        yield similarity_backward(acts, sim, weights), acts, f


def _j_instances(seed, j_fn):
    """d J(S(acts)) / d acts via the S-gradient of ``j_fn`` and the similarity backward."""
    rng = np.random.default_rng(seed)
    for m, c in SIZES:
        acts = untied_activations(rng, m, c)

        def f(a):
            return j_fn(pairwise_similarity(a, 1.0))[0]

        sim = pairwise_similarity(acts, 1.0)
        yield similarity_backward(acts, sim, j_fn(sim)[1]), acts, f, _det_slack(sim.s)


def _loss_instances(seed, loss_fn, min_batch=1):
    rng = np.random.default_rng(seed)
    for m, c in SIZES:
        m = max(m, min_batch)
        acts = untied_activations(rng, m, c)
        yield loss_fn(acts)[1], acts, lambda a: loss_fn(a)[0]


def _wld_instances(seed, variant):
    rng = np.random.default_rng(seed)
    spec = RegularizerSpec(variant, lambda1=0.7, lambda2=0.3, gamma=1.0)
    for m, c in SIZES:
        if variant is Variant.DECOV:
            m = max(m, 2)
        acts = untied_activations(rng, m, c)
        out = diversity.wld_reg_loss(acts, spec)
        yield out.grad_acts, acts, lambda a: diversity.wld_reg_loss(a, spec).loss


def _network_instances(seed, variant):
    """Full augmented loss of a tanh net, differentiated w.r.t. every weight and bias."""
    rng = np.random.default_rng(seed)
    spec = RegularizerSpec(variant, lambda1=0.5, lambda2=0.1, gamma=1.0)
    for dims, m in (([3, 6, 5, 3], 4), ([4, 8, 8, 2], 3)):
        model = network.Mlp.build(dims, "tanh", seed=int(rng.integers(1 << 31)))
        x = rng.normal(size=(m, dims[0]))
        y = rng.integers(0, dims[-1], size=m)

        def aug_loss():
            trace = network.forward(model, x)
            task, dlogits = network.cross_entropy(trace.logits, y)
            reg = diversity.wld_reg_loss(trace.features, spec)
            return task + reg.loss, trace, dlogits, reg

        _, trace, dlogits, reg = aug_loss()
        grads = network.backward(model, trace, dlogits, reg.grad_acts)
        for layer, (gw, gb) in zip(model.layers, grads):
            for attr, analytic in (("weight", gw), ("bias", gb)):
                base = getattr(layer, attr)

                def f(p, layer=layer, attr=attr):
                    saved = getattr(layer, attr)
                    setattr(layer, attr, p)
                    try:
                        return aug_loss()[0]
                    finally:
                        setattr(layer, attr, saved)

                yield analytic, base, f


def _components(seed):
    return {
        "similarity": lambda: _sim_instances(seed, smooth=False),
        "similarity_smooth": lambda: _sim_instances(seed, smooth=True),
        "direct": lambda: _j_instances(seed, diversity.j_direct),
        "det": lambda: _j_instances(seed, diversity.j_det),
        "logdet": lambda: _j_instances(seed, diversity.j_logdet),
        "penalty": lambda: _loss_instances(seed, diversity.activation_penalty),
        "decov": lambda: _loss_instances(seed, diversity.decov_loss, min_batch=2),
        **{f"wld_{v.value}": (lambda v=v: _wld_instances(seed, v)) for v in Variant},
        **{f"network_{v.value}": (lambda v=v: _network_instances(seed, v)) for v in Variant},
    }


COMPONENTS = tuple(_components(0))


def gradcheck(tolerance=1e-5, components=None, seed=0, perturb=None):
    """Run the finite-difference suites and collect a report.

    ``components`` restricts the run to the named suites (see ``COMPONENTS``);
    a name matches every suite it is a prefix of, or that ends with it, so
    ``"det"`` selects ``det``, ``wld_det`` and ``network_det``. ``perturb``
    maps a suite name to a function applied to each analytic gradient, for
    testing that a wrong gradient is caught.
    """
    if not tolerance > 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance}")
    suites = _components(seed)
    if components:
        wanted = [str(c).lower() for c in components]
        unknown = [w for w in wanted if not any(_selects(w, n) for n in suites)]
        if unknown:
            raise ValueError(f"unknown gradcheck component(s): {', '.join(unknown)}")
        suites = {n: s for n, s in suites.items() if any(_selects(w, n) for w in wanted)}
    perturb = perturb or {}
    report = GradcheckReport(tolerance)
    for name, make in suites.items():
        worst, passed, widest = 0.0, True, 0.0
        for analytic, x, f, *rest in make():
            slack = rest[0] if rest and name == "det" else 0.0
            if name in perturb:
                analytic = perturb[name](analytic)
            err = relative_error(analytic, numeric_grad(f, x))
            worst = max(worst, err)
            widest = max(widest, slack)
            passed = passed and err <= tolerance + slack
        report.results.append(ComponentResult(name, worst, passed, widest))
    return report


def _selects(wanted, name):
    return name == wanted or name.startswith(wanted + "_") or name.endswith("_" + wanted)
