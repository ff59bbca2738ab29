"""
Decoding raw action vectors into accelerator designs
=====================================================

Every search method in this package works in the same coordinate system: one
raw value in [0, 1] per declared parameter. The decode walks parameters in
scaling order, so a tile never exceeds its outer level and parallelism never
exceeds the chip, no matter what the raw vector says.
"""

import numpy as np

from coredse.design import CoDesignSpace, Layer, SpaceOptions, Workload, validate_config

# A two-layer workload and a deliberately small space.
workload = Workload(
    "demo",
    (
        Layer(K=32, C=16, X=28, Y=28, R=3, S=3),
        Layer(K=64, C=32, X=14, Y=14, R=3, S=3),
    ),
)
options = SpaceOptions(n_pe=(2, 64, 2), l1_bytes=(1024, 4096, 1024), l2_bytes=(8192, 32768, 8192))
codesign = CoDesignSpace(workload, options)

print(f"{len(codesign.space.params)} parameters:")
for spec in codesign.space.params[:8]:
    print(f"  {spec.name}: {type(spec.kind).__name__}")
print("  ...")

# The all-0.5 vector picks the middle of every decoded range.
mid = codesign.decode(np.full(len(codesign.space.params), 0.5))
print(f"\nmidpoint design: n_pe={mid.n_pe}, l1={mid.l1_bytes} B, l2={mid.l2_bytes} B")
lvl1, lvl2 = mid.mappings[0]
print(f"layer 0 level-2 order {lvl2.order}, tiles {lvl2.tiles}")
print(f"layer 0 level-1 order {lvl1.order}, tiles {lvl1.tiles}")

# Random vectors decode to valid designs too; that is the point of the
# scaled bounds. validate_config is an independent re-check.
rng = np.random.default_rng(0)
bad = 0
for _ in range(2000):
    config = codesign.decode(rng.random(len(codesign.space.params)))
    bad += bool(validate_config(config, workload))
print(f"\n2000 random decodes, {bad} structural failures")
