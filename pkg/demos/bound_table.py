"""How the predicted alternation count moves with margin, radius, and slope."""

from cac.guarantee import iteration_bound

delta = 0.125
t = 0.99

print("margin epsilon vs predicted alternations (gamma = 10)")
for epsilon in (0.5, 0.1, 0.01, 0.001):
    n = iteration_bound(epsilon, delta, 10.0, t)
    print(f"  epsilon={epsilon:<6} -> n={n}")

print("jacobian bound gamma vs predicted alternations (epsilon = 0.01)")
for gamma in (0.1, 1.0, 10.0, 100.0):
    n = iteration_bound(0.01, delta, gamma, t)
    print(f"  gamma={gamma:<6} -> n={n}")

print("faster contraction (epsilon = 0.01, gamma = 10)")
for t_fast in (0.99, 0.9, 0.7, 0.5):
    n = iteration_bound(0.01, delta, 10.0, t_fast)
    print(f"  t={t_fast:<5} -> n={n}")

# Once the margin covers the whole search ball the first candidate that the
# surrogate produces must already transfer, so the bound collapses to one.
print("margin dominates the ball: epsilon >= delta * gamma")
print("  n =", iteration_bound(0.5, 0.125, 1.0, 0.99))
