"""
Named experiment presets.

Each preset is a complete ExperimentConfig for one of the reference
experiments. Step-size exponents default to alpha = 13/14, beta = 4/7.
"""

from typing import Any, Callable, Dict, List, Optional, Tuple

from efi.core.errors import ConfigError
from efi.schemas.experiment import ExperimentConfig, parse_config

ALPHA_DEFAULT = 13.0 / 14.0
BETA_DEFAULT = 4.0 / 7.0

Constants = Tuple[float, float, float, float]


def _schedule(
    constants: Constants, alpha: float = ALPHA_DEFAULT, beta: float = BETA_DEFAULT, start: int = 1
) -> Dict[str, Any]:
    C_eps, c_eps, C_gamma, c_gamma = constants
    return {
        "start": start,
        "C_eps": C_eps,
        "c_eps": c_eps,
        "alpha": alpha,
        "C_gamma": C_gamma,
        "c_gamma": c_gamma,
        "beta": beta,
    }


def _sghmc(zeta: float) -> Dict[str, Any]:
    return {"algorithm": "sghmc", "tempering": {"kind": "constant", "tau": 1.0, "zeta": zeta}}


def _experiment(
    name: str,
    family: Dict[str, Any],
    n: int,
    widths: List[int],
    eta: float,
    lam: float,
    schedule: List[Dict[str, Any]],
    run: Tuple[int, int, int],
    sampler: Optional[Dict[str, Any]] = None,
    variant: str = "efi_default",
    methods: Optional[List[str]] = None,
    replicates: int = 100,
) -> Dict[str, Any]:
    burnin, iterations, thin = run
    return {
        "name": name,
        "family": family,
        "n": n,
        "replicates": replicates,
        "seed": 0,
        "network": {"layer_widths": widths, "activation": "relu"},
        "energy": {"variant": variant, "eta": eta, "lambda": lam},
        "schedule": schedule,
        "sampler": sampler or {"algorithm": "sgld"},
        "prior": {"rho": 1e-2, "sigma0": 1e-5, "sigma1": 0.02},
        "run": {"burnin": burnin, "iterations": iterations, "thin": thin},
        "methods": methods or ["efi"],
    }


# ── Linear regression ──────────────────────────────────────────────────────

LINEAR_FAMILY = {"p": 10, "truth": [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]}
LINEAR_CONSTANTS: Constants = (50000, 10000, 5000, 100000)

# (eta, lambda) -> (zeta, constants, burn-in, iterations, thin)
UNKNOWN_SIGMA_SETTINGS: Dict[Tuple[float, float], Tuple[float, Constants, int, int, int]] = {
    (2, 30): (0.025, (6500, 100000, 1700, 100000), 10000, 50000, 5),
    (2, 40): (0.025, (5600, 100000, 1400, 100000), 10000, 90000, 9),
    (2, 50): (0.05, (4000, 100000, 1000, 100000), 10000, 200000, 20),
    (4, 50): (0.005, (1950, 80000, 490, 80000), 10000, 120000, 12),
}


def _linear_known(name: str, eta: float, variant: str) -> Dict[str, Any]:
    return _experiment(
        name,
        {"name": "linear_known_sigma", "sigma": 1.0, **LINEAR_FAMILY},
        500,
        [12, 300, 100, 10],
        eta,
        10,
        [_schedule(LINEAR_CONSTANTS)],
        (1000, 100000, 10),
        variant=variant,
        methods=["efi", "ols"],
    )


def _linear_unknown(eta: float, lam: float) -> Dict[str, Any]:
    zeta, constants, burnin, iterations, thin = UNKNOWN_SIGMA_SETTINGS[(eta, lam)]
    return _experiment(
        f"linear_unknown_sigma_eta{eta:g}_lambda{lam:g}",
        {"name": "linear_unknown_sigma", **LINEAR_FAMILY, "truth": LINEAR_FAMILY["truth"] + [1]},
        500,
        [12, 300, 100, 11],
        eta,
        lam,
        [_schedule(constants, alpha=BETA_DEFAULT)],
        (burnin, iterations, thin),
        sampler=_sghmc(zeta),
        methods=["efi", "efd"],
    )


def _outlier_tempering() -> Dict[str, Any]:
    return _experiment(
        "outlier_tempering",
        {
            "name": "linear_unknown_sigma",
            **LINEAR_FAMILY,
            "truth": LINEAR_FAMILY["truth"] + [1],
            "outlier_fraction": 0.1,
            "outlier_shift": 4.0,
        },
        600,
        [12, 300, 100, 11],
        2,
        50,
        [_schedule((5e7, 1e7, 50, 1e4))],
        (50000, 150000, 15),
        sampler={
            "algorithm": "sgld",
            "tempering": {"kind": "geometric", "T0": 100.0, "decay": 0.9999, "floor": 1.0},
        },
        methods=["efi", "ols"],
    )


# ── Behrens-Fisher / bivariate normal ──────────────────────────────────────

# (sigma1, per-group n) -> (zeta, shared constant C, run)
BEHRENS_FISHER_SETTINGS: Dict[Tuple[str, int], Tuple[float, float, Tuple[int, int, int]]] = {
    ("unequal", 50): (0.01, 2500, (10000, 40000, 4)),
    ("unequal", 500): (0.005, 3000, (10000, 60000, 6)),
    ("equal", 50): (0.05, 2800, (10000, 40000, 4)),
    ("equal", 500): (0.028, 3100, (10000, 60000, 6)),
}


def _behrens_fisher(variance: str, group_n: int) -> Dict[str, Any]:
    zeta, C, run = BEHRENS_FISHER_SETTINGS[(variance, group_n)]
    sigma1 = 0.5 if variance == "unequal" else 1.0
    return _experiment(
        f"bf_{variance}_var_n{group_n}",
        {
            "name": "behrens_fisher",
            "group_sizes": [group_n, group_n],
            "truth": [1.0, sigma1, 0.0, 1.0],
        },
        2 * group_n,
        [2, 20, 10, 2],
        5,
        20,
        [_schedule((C, 100000, C, 100000))],
        run,
        sampler=_sghmc(zeta),
        methods=["efi", "welch", "hsu_scheffe", "behrens_fisher_mc"],
    )


def _bivariate() -> Dict[str, Any]:
    return _experiment(
        "bivariate_normal",
        {"name": "bivariate_normal"},
        100,
        [4, 80, 20, 5],
        2,
        50,
        [_schedule((4500, 100000, 1100, 100000), alpha=BETA_DEFAULT)],
        (10000, 50000, 5),
        sampler=_sghmc(0.1),
        methods=["efi", "bivariate_fiducial"],
    )


# ── Nonlinear / logistic / semi-supervised ─────────────────────────────────


def _gauss2() -> Dict[str, Any]:
    return _experiment(
        "gauss2",
        {"name": "gauss2"},
        250,
        [3, 150, 50, 8],
        500,
        0.2,
        [
            _schedule((1, 1e7, 1, 100)),
            _schedule((1000, 100000, 10, 10000), start=50000),
        ],
        (60000, 150000, 15),
        methods=["efi", "nls"],
        replicates=1,
    )


def _logistic() -> Dict[str, Any]:
    return _experiment(
        "logistic",
        {"name": "logistic_binary", "p": 5, "truth": [1, 1, 1, -1, -1]},
        1000,
        [7, 100, 30, 5],
        2,
        1000,
        [_schedule((50000, 100000, 30000, 100000), alpha=2 / 7, beta=2 / 7)],
        (10000, 50000, 5),
        sampler=_sghmc(0.01),
        methods=["efi", "logistic_mle"],
    )


# name -> (n, feature count, eta, lambda, constants)
SSL_DATASETS: Dict[str, Tuple[int, int, float, float, Constants]] = {
    "divorce": (170, 54, 10 / 3, 300, (100000, 100000, 2000, 100000)),
    "diabetes": (520, 16, 2, 500, (200000, 100000, 1000, 100000)),
    "breast_cancer": (699, 9, 5, 200, (100000, 100000, 2000, 100000)),
    "raisin": (900, 6, 2, 500, (100000, 100000, 2000, 100000)),
}


def _ssl(dataset: str) -> Dict[str, Any]:
    n, features, eta, lam, constants = SSL_DATASETS[dataset]
    p = features + 1
    return _experiment(
        f"ssl_{dataset}",
        {"name": "ssl_logistic", "p": p, "label_missing_fraction": 0.5},
        n,
        [p + 2, 90, 30, p],
        eta,
        lam,
        [_schedule(constants, alpha=2 / 7, beta=2 / 7)],
        (10000, 40000, 4),
        sampler=_sghmc(0.1),
        replicates=1,
    )


# ── Mediation ──────────────────────────────────────────────────────────────

MEDIATION_NULL_CASES: Dict[int, Tuple[float, float]] = {1: (0.2, 0.0), 2: (0.0, 0.2), 3: (0.0, 0.0)}
MEDIATION_POWER_CASES: Dict[str, Tuple[float, float]] = {
    "b0.1_g0.4": (0.1, 0.4),
    "bm0.1_g0.4": (-0.1, 0.4),
    "b0.2_g0.2": (0.2, 0.2),
}

# (n, case) -> (zeta, constants)
MEDIATION_TYPE_I_SETTINGS: Dict[Tuple[int, int], Tuple[float, Constants]] = {
    (500, 1): (0.1, (290000, 100000, 4000, 100000)),
    (500, 2): (0.1, (100000, 100000, 2000, 100000)),
    (500, 3): (0.1, (100000, 100000, 2000, 100000)),
    (1000, 1): (0.1, (100000, 100000, 4000, 100000)),
    (1000, 2): (1.0, (200000, 100000, 4000, 100000)),
    (1000, 3): (0.1, (2000, 100000, 1000, 100000)),
    (2000, 1): (1.0, (200000, 100000, 4000, 100000)),
    (2000, 2): (1.0, (200000, 100000, 4000, 100000)),
    (2000, 3): (0.1, (2000, 100000, 1000, 100000)),
}
MEDIATION_POWER_SETTING: Tuple[float, Constants] = (0.1, (2000, 100000, 1000, 100000))


def _mediation(
    name: str, n: int, effect: Tuple[float, float], setting: Tuple[float, Constants]
) -> Dict[str, Any]:
    beta, gamma = effect
    zeta, constants = setting
    truth = [1.0, beta, 0.2, 0.4, 2.0**0.5, gamma, 0.4, 0.6, 1.0]
    return _experiment(
        name,
        {"name": "mediation", "truth": truth},
        n,
        [7, 180, 30, 9],
        10,
        10,
        [_schedule(constants, alpha=BETA_DEFAULT)],
        (10000, 50000, 5),
        sampler=_sghmc(zeta),
        methods=["efi", "sobel", "maxp"],
    )


# ── Registry ───────────────────────────────────────────────────────────────


def _registry() -> Dict[str, Callable[[], Dict[str, Any]]]:
    presets: Dict[str, Callable[[], Dict[str, Any]]] = {
        "linear_known_sigma": lambda: _linear_known("linear_known_sigma", 10, "efi_default"),
        "linear_known_sigma_efi_a": lambda: _linear_known("linear_known_sigma_efi_a", 100, "efi_a"),
    }
    for eta, lam in UNKNOWN_SIGMA_SETTINGS:
        presets[f"linear_unknown_sigma_eta{eta:g}_lambda{lam:g}"] = (
            lambda eta=eta, lam=lam: _linear_unknown(eta, lam)
        )
    for variance, group_n in BEHRENS_FISHER_SETTINGS:
        presets[f"bf_{variance}_var_n{group_n}"] = (
            lambda variance=variance, group_n=group_n: _behrens_fisher(variance, group_n)
        )
    presets["bivariate_normal"] = _bivariate
    presets["outlier_tempering"] = _outlier_tempering
    presets["gauss2"] = _gauss2
    presets["logistic"] = _logistic
    for dataset in SSL_DATASETS:
        presets[f"ssl_{dataset}"] = lambda dataset=dataset: _ssl(dataset)
    for (n, case), setting in MEDIATION_TYPE_I_SETTINGS.items():
        name = f"mediation_type1_n{n}_case{case}"
        presets[name] = lambda name=name, n=n, case=case, setting=setting: _mediation(
            name, n, MEDIATION_NULL_CASES[case], setting
        )
    for n in (500, 1000, 2000):
        for label, effect in MEDIATION_POWER_CASES.items():
            name = f"mediation_power_n{n}_{label}"
            presets[name] = lambda name=name, n=n, effect=effect: _mediation(
                name, n, effect, MEDIATION_POWER_SETTING
            )
    return presets


PRESETS = _registry()


def list_presets() -> List[str]:
    return list(PRESETS)


def preset_dict(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'", [f"available: {', '.join(PRESETS)}"])
    return PRESETS[name]()


def get_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_dict(name))
