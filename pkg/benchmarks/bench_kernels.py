"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times im2col, col2im and the Jacobi eigensolver on shapes the model
actually uses, then one full training step (forward, backward, Adam)
under each backend.  Reports the best of ``--repeat`` runs in milliseconds.
"""

import argparse
import timeit

import numpy as np

from madapt import kernels
from madapt.codec import EncoderSpec
from madapt.model import Model
from madapt.toydata import content_image, style_image
from madapt.training import Adam, compute_losses, frozen_copy, sample_quadruplet


def conv_case(rng, B, C, H, k=3):
    xp = rng.normal(size=(B, C, H + k - 1, H + k - 1))
    cols = rng.normal(size=(B, C * k * k, H * H))
    return xp, cols, k, H


def im2col_fn(case):
    xp, _, k, H = case
    return lambda: kernels.im2col(xp, k, 1, H, H)


def col2im_fn(case):
    xp, cols, k, H = case
    B, C, hp, wp = xp.shape
    return lambda: kernels.col2im(cols, B, C, hp, wp, k, 1, H, H)


def jacobi_fn(a):
    return lambda: kernels.jacobi_eigh(a)


def train_step_fn(seed=0):
    rng = np.random.default_rng(seed)
    model = Model.initialize(rng, EncoderSpec((8, 16, 32, 64)))
    lossnet = frozen_copy(model.params)
    cs = [content_image(i, 72) for i in range(3)]
    ss = [style_image(i, 72) for i in range(3)]
    opt = Adam(lr=1e-4)

    def step():
        q = sample_quadruplet(cs, ss, rng, crop_size=64)
        for t in model.params.values():
            t.grad = None
        _, total, _ = compute_losses(model, lossnet, q)
        total.backward()
        opt.step(model.params)

    return step


def best_ms(fn, repeat, number):
    fn()  # warm-up, includes numba compilation
    return 1e3 * min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-train", action="store_true", help="kernels only")
    args = ap.parse_args(argv)

    backends = ["numpy"]
    try:
        kernels.set_backend("numba")
        backends.insert(0, "numba")
    except RuntimeError:
        print("numba not installed; timing the numpy backend only")

    rng = np.random.default_rng(0)
    small, large = conv_case(rng, 5, 16, 32), conv_case(rng, 5, 64, 8)
    spd = {}
    for c in (8, 32, 64):
        m = rng.normal(size=(c, 4 * c))
        spd[c] = m @ m.T / (4 * c)

    cases = [
        ("im2col  5x16x32x32 k3", im2col_fn(small), 20),
        ("im2col  5x64x8x8   k3", im2col_fn(large), 50),
        ("col2im  5x16x32x32 k3", col2im_fn(small), 20),
        ("col2im  5x64x8x8   k3", col2im_fn(large), 50),
    ]
    cases += [(f"jacobi  {c}x{c}", jacobi_fn(a), 3 if c > 32 else 10) for c, a in spd.items()]
    if not args.skip_train:
        cases.append(("train step crop 64", train_step_fn(), 1))

    prev = kernels.backend()
    results = {}
    try:
        for name in backends:
            kernels.set_backend(name)
            for label, fn, number in cases:
                results[label, name] = best_ms(fn, args.repeat, number)
    finally:
        kernels.set_backend(prev)

    head = f"{'case':<24}" + "".join(f"{b + ' ms':>12}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}"
    print(head)
    for label, _, _ in cases:
        row = f"{label:<24}" + "".join(f"{results[label, b]:>12.3f}" for b in backends)
        if len(backends) == 2:
            row += f"{results[label, 'numpy'] / results[label, 'numba']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
