# Copyright 2024 The amvuq Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import jax.numpy as jnp
import jax.random as jr
import pytest

import amvuq as amv

from .helpers import minimisation_fn_minima_init_args, minimisers, tree_allclose


@pytest.mark.parametrize("solver", minimisers)
@pytest.mark.parametrize("fn, minimum, y0, args", minimisation_fn_minima_init_args)
@pytest.mark.parametrize("has_aux", [False, True])
def test_reaches_minimum(solver, fn, minimum, y0, args, has_aux):
    tag = {"tag": jnp.arange(3.0)}
    objective = (lambda y, a: (fn(y, a), tag)) if has_aux else fn
    sol = amv.minimise(
        objective, solver, y0, args, has_aux=has_aux, max_steps=10_000, throw=False
    )
    assert tree_allclose(fn(sol.value, args), minimum, rtol=1e-4, atol=1e-4)
    if has_aux:
        assert tree_allclose(sol.aux, tag)


@pytest.mark.parametrize("history_length", [1, 4, 10])
def test_quadratic(getkey, history_length):
    factor = jnp.eye(3) + 0.3 * jr.normal(getkey(), (3, 3))
    hessian = factor @ factor.T
    target = jnp.array([4.0, -7.0, 0.5])

    def f(y, _):
        r = y - target
        return 0.5 * r @ hessian @ r + 3.0

    sol = amv.minimise(f, amv.LBFGS(1e-10, history_length=history_length), -target)
    assert sol.result == amv.RESULTS.successful
    assert tree_allclose(sol.value, target, rtol=1e-6, atol=1e-6)


def test_energy_trace_decreases():
    solver = amv.LBFGS(1e-10, trace_length=200)

    def f(y, _):
        return jnp.sum((y - jnp.arange(5.0)) ** 4) + jnp.sum(y**2)

    sol = amv.minimise(f, solver, jnp.zeros(5), max_steps=199)
    num_accepted = int(sol.state.num_accepted_steps)
    assert num_accepted >= 1
    trace = sol.state.energy_trace[:num_accepted]
    # Sufficient decrease holds on every accepted step.
    assert jnp.all(jnp.diff(trace) <= 0)
    assert jnp.all(jnp.isnan(sol.state.energy_trace[num_accepted:]))


def test_max_steps():
    solver = amv.LBFGS(1e-12)

    def f(y, _):
        return jnp.sum(jnp.cosh(y - 3.0))

    sol = amv.minimise(f, solver, jnp.zeros(3), max_steps=2, throw=False)
    assert sol.result == amv.RESULTS.nonlinear_max_steps_reached
    with pytest.raises(Exception, match="maximum number of steps"):
        amv.minimise(f, solver, jnp.zeros(3), max_steps=2)


def test_bad_gtol():
    with pytest.raises(ValueError):
        amv.LBFGS(0.0)


def test_non_scalar_objective():
    with pytest.raises(ValueError, match="single floating-point scalar"):
        amv.minimise(lambda y, _: y, amv.LBFGS(1e-6), jnp.zeros(2))


def test_integer_start():
    sol = amv.minimise(
        lambda y, _: jnp.sum((y - 1.5) ** 2), amv.LBFGS(1e-8), jnp.array([0, 3])
    )
    assert jnp.issubdtype(sol.value.dtype, jnp.floating)
    assert tree_allclose(sol.value, jnp.array([1.5, 1.5]), atol=1e-6)
    assert sol.aux is None
    assert int(sol.stats["num_steps"]) >= int(sol.stats["num_accepted_steps"])


def test_unknown_verbose_entry():
    with pytest.raises(ValueError, match="verbose"):
        amv.LBFGS(1e-6, verbose=frozenset({"hessian"}))
