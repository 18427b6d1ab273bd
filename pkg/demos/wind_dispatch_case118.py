"""
Robust dispatch on the 118-bus system
=====================================

Four wind farms feed the 118-bus network. We train moments on 100
samples, solve the robust dispatch and a nearly non-robust one, then
compare how often each keeps every generator and line within limits on
fresh samples.
"""

from twosided_drcc.cli import CC_DELTA, _setup, load_config, solve_pipeline
from twosided_drcc.stochastics import mean_ci, oos_violation, sample

cfg = load_config(None, "case118")
net, ops, truth, fleet = _setup("case118", cfg)
print(net.name, net.counts(), "wind at", fleet.buses)

###############################################################################
# Solve both models for a handful of training seeds
robust, plain = [], []
for seed in range(5):
    fresh = sample(truth, 10_000, 10_000 + seed)
    _, sol, disp = solve_pipeline(net, ops, truth, fleet, cfg, seed)
    robust.append(oos_violation(disp, net, ops, fleet, fresh, cfg))
    _, sol_cc, disp_cc = solve_pipeline(net, ops, truth, fleet, cfg, seed, delta=CC_DELTA)
    plain.append(oos_violation(disp_cc, net, ops, fleet, fresh, cfg))
    print(f"seed {seed}: cost {sol.objective_value:.1f} vs {sol_cc.objective_value:.1f}, "
          f"OOS {robust[-1]:.4f} vs {plain[-1]:.4f}")

###############################################################################
# Mean and 95% interval over the seeds
print("robust", mean_ci(robust))
print("plain ", mean_ci(plain))
