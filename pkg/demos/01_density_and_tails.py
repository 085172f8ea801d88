# Closed-form scale-mixture density vs its defining integral, and how the
# degrees of freedom control the tails.

import numpy as np

from scalemix import StudentParams, log_marginal_density, quadrature_marginal_density

# %%
# The marginal of a Gaussian whose covariance is scaled by an inverse-gamma
# latent variable is a multivariate Student-t. The package evaluates the
# closed form; the quadrature below integrates the latent scale numerically
# and should agree to many digits.

rng = np.random.default_rng(0)
sigma = np.array([[1.0, 0.4], [0.4, 0.7]])
p = StudentParams(mu=[0.5, -0.5], sigma=sigma, nu=2.5)

print("closed form vs latent-scale quadrature")
for _ in range(5):
    x = p.mu + rng.standard_normal(2) * 2
    closed = np.exp(log_marginal_density(x, p))
    oracle = quadrature_marginal_density(x, p)
    print(f"  x = {np.round(x, 3)}  closed = {closed:.12e}  quad = {oracle:.12e}")

# %%
# Smaller degrees of freedom mean heavier tails: far from the center the
# density ordering reverses relative to the peak.

x_far = np.array([6.0, 6.0])
x_center = np.array([0.5, -0.5])
print("\nlog density at the center and far out, by degrees of freedom")
print(f"{'nu':>8} {'at center':>12} {'at (6,6)':>12}")
for nu in (0.5, 1.0, 5.0, 50.0, 1e6):
    q = StudentParams(mu=[0.5, -0.5], sigma=sigma, nu=nu)
    print(
        f"{nu:>8g} {log_marginal_density(x_center, q):>12.4f} "
        f"{log_marginal_density(x_far, q):>12.4f}"
    )

# %%
# At nu = 1e6 the density is numerically Gaussian; compare against the
# analytic normal log density.

from scipy.stats import multivariate_normal

q = StudentParams(mu=[0.5, -0.5], sigma=sigma, nu=1e6)
mvn = multivariate_normal(mean=[0.5, -0.5], cov=sigma)
x = np.array([1.2, 0.3])
print("\nGaussian limit check at", x)
print("  scale mixture:", log_marginal_density(x, q))
print("  normal       :", mvn.logpdf(x))
