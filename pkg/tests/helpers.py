"""Hand-built model states for unit tests."""
import numpy as np

from multimarker.model import Dataset, Hyperparameters, ModelState


def make_hyper(P=1, D=2, n=1, **kw) -> Hyperparameters:
    base = dict(
        m_alpha=1.0,
        m_beta=0.5,
        tau_alpha=1.0,
        tau_beta=1.0,
        nu_beta1=2.0,
        nu_beta2=3.0,
        nu_P1=1.0,
        nu_P2=3.0,
        nu_z1=0.5 * np.arange(D, 0, -1),
        nu_z2=np.full(D, float(n)),
        m_gamma=np.linspace(-1.0, 1.0, D - 1) if D > 2 else np.zeros(D - 1),
        m_eta=np.zeros(P),
        kappa=2.0,
    )
    base.update(kw)
    return Hyperparameters(**base)


def make_state(n=1, P=1, D=2, **kw) -> ModelState:
    base = dict(
        alpha=np.zeros(P),
        beta=np.ones(P),
        sigma2=np.ones(P),
        mu_alpha=0.0,
        mu_beta=0.5,
        sigma_beta2=1.0,
        theta2=np.ones(D),
        gamma=np.linspace(-1.0, 1.0, D - 1) if D > 2 else np.zeros(D - 1),
        eta=np.zeros(P),
        z=np.ones(n),
        c=np.zeros(n, dtype=np.int64),
    )
    base.update({k: (np.asarray(v, dtype=float) if k not in ("c", "mu_alpha", "mu_beta", "sigma_beta2") else v) for k, v in kw.items()})
    if "c" in kw:
        base["c"] = np.asarray(kw["c"], dtype=np.int64)
    return ModelState(**base)


def make_data(Y, X, x=None) -> Dataset:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return Dataset(Y=Y, X=np.asarray(X, dtype=float), x=None if x is None else np.asarray(x, dtype=float))


def constant_chain(K, X, *, alpha, beta, sigma2, theta2, gamma, eta, hyper=None):
    """A chain whose every retained draw is the same parameter set."""
    from multimarker.sampler import PosteriorChain, SamplerConfig

    X = np.asarray(X, dtype=float)
    P, D = np.size(alpha), X.size
    rep = lambda v: np.tile(np.asarray(v, dtype=float), (K, 1))  # noqa: E731
    draws = {
        "alpha": rep(alpha),
        "beta": rep(beta),
        "sigma2": rep(sigma2),
        "mu_alpha": np.zeros(K),
        "mu_beta": np.zeros(K),
        "sigma_beta2": np.ones(K),
        "theta2": rep(theta2),
        "gamma": rep(gamma).reshape(K, D - 1),
        "eta": rep(eta),
    }
    return PosteriorChain(
        draws=draws,
        X=X,
        hyper=hyper if hyper is not None else make_hyper(P=P, D=D),
        config=SamplerConfig(n_iter=K + 1, n_burn=1),
        fingerprint="synthetic",
    )
