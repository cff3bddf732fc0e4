"""
Gradient check
==============

Compare autograd against central finite differences for every parameter tensor.
"""

from lecvad import grad_check

report = grad_check(T=6, d=8, C=3, m_blocks=1)
print(f"{len(report.errors)} tensors, max relative error {report.max_error:.2e}, {report.seconds:.1f}s")
for name, err in sorted(report.errors.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  {err:.2e}  {name}")

# A deliberately broken gradient is caught.
bad = grad_check(T=4, d=4, C=2, corrupt="encoder.gcn_weight")
print("corrupted tensor flagged:", bad.failed)
