"""Attack one point of a two-cluster toy oracle and walk through the record."""

import numpy as np

from cac.bench import gen_synthetic_task
from cac.engine import AttackConfig, cac_attack

task = gen_synthetic_task(
    "gaussian_blobs",
    2,
    2,
    200,
    seed=7,
    centroids=((0.4, 0.4), (0.6, 0.6)),
    noise=0.05,
    pool_sigma=0.35,
)

x = task.eval_points[0]
config = AttackConfig(
    delta=0.2,
    budget=80,
    m=16,
    n_init=100,
    n_adv=1,
    epochs=300,
    learning_rate=1e-2,
    hidden=(16,),
    seed=2,
)

result = cac_attack(task.fresh_backend(), x, task.holdout, config)

print("target point:", np.round(x, 4), "label", result.trace.target_label)
print("status:", result.status)
print("queries spent:", result.queries_total, "of", config.budget)
print("alternations:", len(result.trace.alternations))

for record in result.trace.alternations:
    chain = record.chains[0]
    print(
        f"  j={record.j} margin={record.epsilon_hat:.4f} "
        f"gamma_bound={record.gamma_bound:.2f} outcome={chain.outcome}"
    )

if result.success:
    print("adversarial point:", np.round(result.adversarial, 4))
    print(f"distances: l2={result.l2:.4f} linf={result.linf:.4f} (ball {config.delta})")

cert = result.certificate
print("certificate: assumptions_held =", cert.assumptions_held)
print(
    "certificate: terminated_at =", cert.terminated_at,
    "of predicted bound", cert.bound_n,
)
