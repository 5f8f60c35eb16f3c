"""
RAP on a three-file library
===========================

Minimize the rate bound over caching distributions for a skewed
three-file library and watch the optimum drift from "cache the most
popular file" toward uniform caching as the number of users grows.
"""
import numpy as np

from codedcache import CachingDist, PopularityDist, optimize_rap, rate_upper_bound

q = PopularityDist([0.7, 0.21, 0.09])
M = 1  # each user stores one file's worth of packets

# the two corners of the Random-LFU family, for reference
lfu = CachingDist([1, 0, 0], M)
uniform = CachingDist([1 / 3] * 3, M)

print(f"{'n':>3} {'p*':>24} {'rub(p*)':>9} {'rub LFU':>9} {'rub unif':>9}")
for n in (3, 5, 10, 15):
    p, rub = optimize_rap(q, n, 3, M)
    r_lfu = rate_upper_bound(lfu, q, n).rub
    r_uni = rate_upper_bound(uniform, q, n).rub
    print(f"{n:>3} {str(np.round(p.p, 3)):>24} {rub:9.5f} {r_lfu:9.5f} {r_uni:9.5f}")

# few users: requests concentrate on file 1, so caching it whole wins.
# many users: nearly every file gets requested, so spreading the cache
# creates more coded-multicast opportunities.
