# In this comparison, we track the endpoint errors of the posterior-mean estimate as a
# chain grows, for HMC on the tempered posterior (zeta = 1e-6) and on the posterior
# itself (zeta = 1), against the MAP estimate weighted by its Laplace error map. Both
# chains start from the MAP estimate, use the same number of gradient evaluations and
# have their step sizes tuned to an acceptance rate in [0.85, 0.95].
#
# Usage: python benchmarks/epe-vs-samples.py [config]

import os
import sys
import timeit

import jax

import amvuq as amv


jax.config.update("jax_enable_x64", True)

here = os.path.dirname(os.path.abspath(__file__))
default = os.path.join(here, "synthetic_turbulence.cfg")
path = sys.argv[1] if len(sys.argv) > 1 else default
config = amv.read_config(path)
params = config.params
theta_true, y = amv.generate_synthetic(config)

start = timeit.default_timer()
map_config = amv.OptimConfig(max_steps=config.map_max_steps)
theta_hat, diagnostics = amv.estimate_map(y, params, map_config)
hessian = amv.assemble_hessian(theta_hat, y, params, config.band_radius)
laplace = amv.laplace_error_map(hessian, "displacement", config.radius)
laplace_time = timeit.default_timer() - start
laplace_report = amv.criteria_suite(theta_true, theta_hat, laplace, y.mask)

tempered = amv.ChainConfig(
    sampler="hmc",
    step_size=config.step_size,
    num_leapfrog=config.num_leapfrog,
    num_steps=config.num_steps,
    zeta=config.zeta,
    hurst_precond=config.hurst_precond,
    seed=config.seed,
)
traces = {}
times = {}
for name, chain in (
    ("hmc_tempered", tempered),
    ("hmc_untempered", tempered.at_temperature(1.0)),
):
    start = timeit.default_timer()
    if config.tune:
        step_size = amv.tune_step_size(y, params, chain, theta_hat)
        chain = chain.replace(step_size=step_size)
    summary = amv.run_chain(y, params, chain, theta_hat)
    times[name] = timeit.default_timer() - start
    traces[name] = amv.epe_trace(summary.samples, chain.zeta, theta_true, y.mask)

print("Endpoint errors of the posterior-mean estimate against the number of samples.")
print("------------------------")
print(f"MAP + Laplace ({laplace_time:.1f}s, {int(diagnostics.num_steps)} steps):")
print(
    f"standard={laplace_report.standard:.5f} "
    f"weighted_2={laplace_report.weighted_2:.5f} "
    f"sparse_masked={laplace_report.sparse_masked:.5f}"
)
for name, trace in traces.items():
    print("---------")
    print(f"{name} ({times[name]:.1f}s):")
    for n, report in trace:
        print(
            f"samples={n} standard={report.standard:.5f} "
            f"weighted_2={report.weighted_2:.5f} "
            f"sparse_masked={report.sparse_masked:.5f}"
        )
