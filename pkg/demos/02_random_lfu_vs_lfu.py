"""
Random LFU against plain LFU
============================

Large library with steep Zipf popularity.  The cutoff m~ of the
Random-LFU family is chosen by scanning every value; LFU caches the
M most popular files whole and multicasts every other requested file.
"""
from codedcache import analysis, zipf

m, n, alpha = 500, 5000, 1.6
q = zipf(m, alpha)

print(f"{'M':>4} {'m~':>4} {'rub':>9} {'lfu':>9} {'ratio':>7}")
for M in (5, 10, 20, 40, 80):
    mt, rub = analysis.search_mtilde(q, n, m, M)
    lfu = analysis.lfu_rate(q, n, M)
    print(f"{M:>4} {mt:>4} {rub:9.3f} {lfu:9.3f} {lfu / rub:7.2f}")

# with n >> m almost every file is requested; once M is moderate the
# search lands on uniform caching (m~ = m) and the bound is m/M - 1.
