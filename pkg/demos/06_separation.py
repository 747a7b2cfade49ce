# Extreme point and separating direction for a finite point set.
import numpy as np

from gsflow import separate, verify
from gsflow.geometry import brute_force_direction, neighborhood_cert_many, sample_ball

rng = np.random.default_rng(3)
P = rng.normal(size=(6, 3))
cert = separate(P)
print("selected point:", cert.y_index, " direction:", np.round(cert.e, 4))
print("certified D =", cert.D, " measured ratio =", round(cert.ratio, 3), " worst case =", cert.apriori)
print("verifies:", verify(cert))

Z = sample_ball(cert.y, cert.Lprime, 1000, rng)
print("neighbourhood holds for all 1000 samples:", bool(neighborhood_cert_many(cert, Z).all()))
print("sampled best ratio:", round(brute_force_direction(P).ratio, 3))
