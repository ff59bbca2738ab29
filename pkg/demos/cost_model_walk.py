"""
What the cost model charges for a mapping
==========================================

Latency is the slower of compute and memory traffic; traffic depends on the
loop order because a tensor is refetched once per iteration of every loop at
or outside its innermost relevant loop. This script prices one convolution
layer under two orders that differ only in where the output-column loop sits.
"""

from coredse.costmodel import CostConstants, area_mm2, layer_latency, traffic_bytes
from coredse.design import Layer, LevelMapping

layer = Layer(K=64, C=64, X=28, Y=28, R=3, S=3)
consts = CostConstants()

# Canonical tile order is (S, R, K, C, X, Y). Level 2 quarters K and C and
# halves X, so K, C and X take multiple trips; level 1 halves K, C again.
tiles2 = (3, 3, 16, 16, 14, 28)
tiles1 = (3, 3, 8, 8, 14, 14)

# X is irrelevant to the weight tensor. Inside the R, S loops it costs
# nothing; hoisted outermost, every X trip refetches the weight tile.
for order2 in (("K", "C", "R", "S", "X", "Y"), ("X", "K", "C", "R", "S", "Y")):
    lvl2 = LevelMapping(order=order2, parallel_dim="K", parallelism=16, tiles=tiles2)
    lvl1 = LevelMapping(
        order=("K", "C", "R", "S", "X", "Y"), parallel_dim="K", parallelism=4, tiles=tiles1
    )
    m = layer_latency(layer, (lvl1, lvl2), n_pe=64, consts=consts)
    w_dram = traffic_bytes("weights", layer.dims(), tiles2, order2, consts.bytes_per_element)
    print(f"level-2 order {order2}:")
    print(f"  weight DRAM traffic {w_dram} B")
    print(f"  latency {m.latency} cycles (compute {m.compute}, memory {m.mem})")

# Same tiles, same arithmetic, double the weight traffic. Area depends only
# on the hardware knobs.
print(f"\narea at n_pe=64, l1=4096 B, l2=32768 B: {area_mm2(64, 4096, 32768, consts):.4f} mm^2")
