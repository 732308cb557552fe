"""Pick between two manifolds with the PDE residual.

Two diffusion models differ only by a mirrored partition of the domain.
Each gets its own reduced space; given measurements of a state from either
model, the residual surrogate chooses which reconstruction to trust.  The
oracle choice (smallest true error) and the single affine space trained on
both manifolds are shown for comparison.  This is the small version of the
``nonlinrom test1`` experiment.
"""

from nonlinrom.experiments import default_config, run_test1

cfg = default_config("test1", "desk", seed=1)
cfg.update(n_per_side=32, n_train=200, n_test=60)
res = run_test1(cfg)
print("chosen dimensions (affine, model 1, model 2):", res["n_star"])
for row in res["selection"]:
    print(f"test set {row['test_set']}  {row['method']:9s}  picks the right model "
          f"{100 * row['success_rate']:.0f}% of the time")
for row in res["errors"]:
    print(f"test set {row['test_set']}  {row['method']:9s}  mean error {row['err_avg']:.3e}")
