import warnings

import pandas as pd

from OTFSHybrid.processes.sim_harness import SimConfig, SimulationProcess

snr_list = [8, 10, 12, 14]
settings = dict(n=16, m=32, p=4, l_max=10, k_max=6, snr_db_list=snr_list, iters=10,
                min_frames=10, min_bit_errors=100, max_frames=200, seed=1)

list_detectors = [
    ("mp", dict(detector="mp")),
    ("hybrid L=1", dict(detector="hybrid", l_map=1)),
    # undamped hybrid messages can oscillate around 10 dB, damping 0.7 as for mp settles them
    ("hybrid L=1 damped", dict(detector="hybrid", l_map=1, damping=0.7)),
    ("hybrid L=2", dict(detector="hybrid", l_map=2)),
    ("map", dict(detector="map")),
]

list_tables = []
for name, choice in list_detectors:
    print("Running %s" % name)
    config = SimConfig(count_ops=True, **settings, **choice)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = SimulationProcess(config).run_sweep()
    table = result.table
    table["detector"] = name
    print(table[["snr_db", "frames", "bit_errors", "ber", "avg_iters", "likelihood_evals"]])
    list_tables.append(table)

print("BER per detector")
df_all = pd.concat(list_tables)
print(df_all.pivot(index="snr_db", columns="detector", values="ber"))
