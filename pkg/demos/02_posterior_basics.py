"""The counting argument behind every uncertainty value in this package.

A symmetric Beta(c, c) prior over a Bernoulli class probability yields the
posterior mean (S + c) / (N + 2c) and variance E(1-E) / (N + 2c + 1). The
classifiers approximate exactly this kind of posterior with Monte-Carlo
draws, reduced by the shared mean / population-std estimators.
"""

import numpy as np

from uqbench.posterior import (
    BetaBernoulliPosterior,
    beta_bernoulli_mean,
    beta_bernoulli_variance,
    mc_estimate,
    mc_mean,
    mc_uncertainty,
)

print("one class-2 observation under a flat Beta(1,1) prior:")
post = BetaBernoulliPosterior(trials=1, successes=1, prior_strength=1.0)
mean = beta_bernoulli_mean(post)
std = np.sqrt(beta_bernoulli_variance(post))
print(f"  mean = {mean:.4f} (the 2/3 rule), std = {std:.4f}")
print("  that std, 1/sqrt(18) ~ 0.2357, is the dashed reference line of the")
print("  OOD-uncertainty summary figures.")

print("\nno observations at all:")
post0 = BetaBernoulliPosterior(0, 0, 1.0)
print(f"  mean = {beta_bernoulli_mean(post0):.4f}, "
      f"std = {np.sqrt(beta_bernoulli_variance(post0)):.4f} = 0.5/sqrt(3)")

print("\nprior strength interpolates between maximum likelihood and 0.5:")
for c in (0.0, 0.5, 1.0, 4.0, 16.0):
    post = BetaBernoulliPosterior(10, 8, c)
    print(f"  c = {c:4.1f}: mean = {beta_bernoulli_mean(post):.4f}")

print("\nMonte-Carlo reduction of posterior draws (population 1/T variance):")
rng = np.random.default_rng(0)
draws = rng.beta(2.0, 1.0, size=(2000, 3))
est = mc_estimate(draws)
print(f"  means {np.round(est.mean, 4)} -> 2/3, "
      f"uncertainties {np.round(est.uncertainty, 4)} -> {1/np.sqrt(18):.4f}")
print(f"  two-point spread check: mean={mc_mean([0.0, 1.0])}, "
      f"uncertainty={mc_uncertainty([0.0, 1.0])}")
