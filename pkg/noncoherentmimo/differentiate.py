#!/usr/bin/env python3
import numpy

def gradient(f, x, dx=1e-4, entries=None):
    """Numerically take the gradient of a scalar function at point x.

    This uses a central finite difference scheme to numerically find the derivatives.
    The objective function must return a scalar, but the inputs can be a scalar or an
    array of any shape.

    Args:
        f: objective function to differentiate
        x: array argument to evaluate the derivatives at (left unchanged on return)
        dx: step of the finite difference method
        entries: flat indices of x to differentiate with respect to (all by default);
                 the derivative is left as nan for other entries
    Returns:
        g: gradient of the function at point x, with the same shape as input x
    """
    x = numpy.array(x, dtype=numpy.float64)
    shape = x.shape
    x = x.reshape(-1)

    g = numpy.full(x.size, numpy.nan)
    if entries is None: entries = range(x.size)

    for i in entries:
        x0 = x[i]
        # We take the derivatives in this way to find the exact step taken after rounding errors
        x[i] = x0 + dx
        xp, fp = x[i], f(x.reshape(shape))
        x[i] = x0 - dx
        xm, fm = x[i], f(x.reshape(shape))
        x[i] = x0
        g[i] = (fp - fm) / (xp - xm)

    return g.reshape(shape)

def relative_error(analytic, numeric, floor=1e-12):
    """Elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor)."""
    scale = numpy.maximum(numpy.maximum(numpy.abs(analytic), numpy.abs(numeric)), floor)
    return numpy.abs(analytic - numeric) / scale

def grad_check(builder, params, fd_step=1e-4, entries=None, rng=None):
    """Compare reverse-mode gradients of a loss graph with central finite differences.

    The builder is called on a dict of parameter arrays and must build a fresh tape,
    register each array as a parameter node under its key, and return the scalar loss
    node. It must be deterministic given the parameters (random inputs frozen).
    Graphs whose output couples batch elements (e.g. train-mode batch normalisation)
    are handled because every perturbation re-runs the whole graph.

    Args:
        builder: callable params -> loss node
        params: dict of parameter name -> array
        fd_step: finite difference step
        entries: if given, only this many randomly chosen entries of each parameter are
                 checked (useful for wide networks)
        rng: RngStream choosing the checked entries when entries is given
    Returns:
        max over checked parameter entries of the relative error between the two gradients
    """
    params = {name: numpy.array(value, dtype=numpy.float64) for name, value in params.items()}
    loss = builder(params)
    analytic = loss.tape.backward(loss)

    worst = 0.
    for name, value in params.items():
        def f(x):
            perturbed = dict(params)
            perturbed[name] = x
            return float(builder(perturbed).value)

        checked = None
        if entries is not None and entries < value.size:
            if rng is None:
                raise ValueError('entries subsampling needs an rng')
            checked = numpy.sort(rng.generator.choice(value.size, entries, replace=False))

        numeric = gradient(f, value, fd_step, checked)
        mask = numpy.isfinite(numeric)
        if not numpy.any(mask): continue
        error = relative_error(analytic[name][mask], numeric[mask])
        worst = max(worst, float(numpy.max(error)))

    return worst
