"""Generates the deterministic alloy fixture used by the inverse-design demo."""
import random

rng = random.Random(20240611)
print("alloy_id,Cr,Co,Al,Ti,Mo,yield_strength,creep_life")
for i in range(24):
    cr = round(rng.uniform(6.0, 20.0), 2)
    co = round(rng.uniform(0.0, 15.0), 2)
    al = round(rng.uniform(2.0, 6.0), 2)
    ti = round(rng.uniform(1.0, 4.0), 2)
    mo = round(rng.uniform(0.0, 5.0), 2)
    ys = 620 + 9.0 * al + 22.0 * ti + 6.5 * mo - 2.8 * cr + rng.gauss(0, 6)
    cl = 950 + 38.0 * co + 55.0 * mo - 9.5 * cr + 12.0 * al + rng.gauss(0, 25)
    print(f"A{i+1:02d},{cr},{co},{al},{ti},{mo},{ys:.1f},{cl:.1f}")
