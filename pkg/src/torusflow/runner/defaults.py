"""Default config of every subcommand; each reproduces one acceptance criterion as stated."""

CHOICES = {
    "scheme": ("strang_split", "duhamel_rk4"),
    "drift_scheme": ("strang_split", "duhamel_rk4"),
    "ref_scheme": ("strang_split", "duhamel_rk4"),
    "proposal": ("laplace", "nu"),
    "family": ("constant_in_time", "piecewise_state_feedback"),
    "functionals": ("holder_u", "holder_v", "product_field"),
    "variant": ("mu", "nu"),
    "method": ("quad", "beta"),
}

# criterion number each subcommand's default config reproduces
CRITERIA = {
    "commutator": 1, "dt-identity": 2, "evolve": 3, "sample": 4, "chaos-moments": 5, "convolution": 6,
    "partition": 7, "varbound": 8, "transport": 9, "energy-check": 10, "dispersionless": 11, "lil": 11,
}

DEFAULTS = {
    "commutator": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 3, "N": 16, "q": None, "variant": "nu"},
        "params": {"pairs": 100, "k_list": [3, 5], "commutator_pairs": 20, "commutator_N": 8,
                   "chain_tol": 1e-10, "breakdown_tol": 1e-10, "commutator_tol": 1e-12, "chunk": 10},
    },
    "dt-identity": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.7, "k": 3, "N": 16, "q": None, "variant": "nu"},
        "params": {"samples": 100, "s_list": [2.7, 3.3], "k_list": [3], "h": 1e-3, "scheme": "duhamel_rk4",
                   "tol": 1e-6, "chunk": 10},
    },
    "evolve": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 3, "N": 32, "q": None, "variant": "nu"},
        "params": {"t": 1.0, "dt": 1e-3, "scheme": "strang_split", "drift_scheme": "duhamel_rk4", "drift_tol": 1e-8,
                   "dts": [0.02, 0.01, 0.005, 0.0025], "ref_scheme": "duhamel_rk4", "slope_target": 2.0,
                   "slope_tol": 0.1, "reversibility_tol": 1e-10, "jacobian_N": 1, "jacobian_tol": 1e-6,
                   "snapshot_every": 100},
    },
    "sample": {
        "seed": 0,
        "measure": {"d": 3, "s": 2.6, "k": 3, "N": 32, "q": None, "variant": "nu"},
        "params": {"count": 2, "sigma_N_list": [32, 64], "ratio_band": [1.9, 2.1]},
    },
    "chaos-moments": {
        "seed": 0,
        "measure": {"d": 3, "s": 2.6, "k": 3, "N": 32, "q": None, "variant": "nu"},
        "params": {"functionals": ["holder_u", "holder_v", "product_field"], "p_list": [2, 4, 8, 16],
                   "samples": 10_000, "eps": 0.05, "alpha": 2.0, "beta": 2.0, "batch": 16, "chunk": 1024,
                   "holder_band": [0.3, 0.7], "product_max": 1.2},
    },
    "convolution": {
        "seed": 0,
        "measure": {"d": 3, "s": 2.6, "k": 3, "N": 8, "q": None, "variant": "nu"},
        "params": {"regimes": [[0.8, 2.0], [1.0, 1.0], [2.0, 0.8]], "norms": [4, 16, 64], "M": 200,
                   "eps": 0.05, "max_tail_fraction": 1.0},
    },
    "partition": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 5, "N": 8, "q": None, "variant": "nu"},
        "params": {"samples": 2000, "proposal": "laplace", "p_list": [1, 2, 4], "l2_samples": 1000,
                   "max_variation": 0.2, "nsigma": 3.0},
        "sweep": {"measure.N": [8, 16, 32, 64]},
    },
    "varbound": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 3, "N": 8, "q": None, "variant": "nu"},
        "params": {"M": 8, "family": "piecewise_state_feedback", "iters": 15, "samples": 1000, "fresh": 4000,
                   "n_low": 1.0, "pieces": 2, "fd_step": 1e-3, "z_samples": 4000, "nsigma": 3.0,
                   "trace_nsigma": 2.0},
    },
    "transport": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 3, "N": 2, "q": None, "variant": "nu"},
        "params": {"t": 0.5, "samples": 2000, "dt": 1e-3, "scheme": "strang_split", "proposal": "laplace",
                   "events": [[["u", 0.0, 6.25, "le"]],
                              [["v", 0.0, 30.96, "ge"]],
                              [["u", 1.0, 6.52, "le"], ["v", -1.0, 31.43, "le"]]],
                   "nsigma": 3.0},
    },
    "energy-check": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 3, "N": 16, "q": None, "variant": "nu"},
        "params": {"N_list": [16, 32, 64], "p_list": [2, 4, 8], "samples": 2000, "radius": 50.0,
                   "max_exponent": 1.2, "max_variation": 0.15},
    },
    "dispersionless": {
        "seed": 0,
        "measure": {"d": 2, "s": 2.6, "k": 3, "N": 8, "q": None, "variant": "nu"},
        "params": {"pairs": 50, "k_list": [3, 5, 7, 9], "H0_range": [0.05, 20.0], "method": "quad",
                   "period_tol": 1e-6, "scaling_H0": [0.1, 0.5, 1.0, 5.0, 25.0], "scaling_tol": 1e-8,
                   "flow_t": 10.0, "flow_tol": 1e-10, "energy_tol": 1e-8, "continuity_samples": 2000},
    },
    "lil": {
        "seed": 0,
        "measure": {"d": 2, "s": 1.6, "k": 3, "N": 256, "q": None, "variant": "mu"},
        "params": {"samples": 1000, "r": None, "refine_N": 512, "oversample": 2, "batch": 32, "tol": 0.1,
                   "refine_tol": 0.05},
    },
}
