# %% [markdown]
# # Significance tests for a binary KPI
#
# The chi-squared survival function is computed from the regularized upper
# incomplete gamma function, so no scipy is needed at runtime.

# %%
import numpy as np

from kpidiag.stats import chi2_sf, contingency_test, percent_deviation, two_proportion_power, two_proportion_test

# %% [markdown]
# 10 failures out of 100 in control against 30 out of 100 in treatment.

# %%
res = two_proportion_test(10, 100, 30, 100, threshold=0.05)
print(res)

# %%
# the same test as a 2x2 table
print(contingency_test(np.array([[10, 90], [30, 70]]), 0.05))

# %%
for x in (0.5, 3.841, 12.5, 30.0):
    print(f"chi2_sf({x}, 1) = {chi2_sf(x, 1):.6g}")

# %% [markdown]
# Percent deviation between two histograms: half the L1 distance, in percent.

# %%
print(percent_deviation({"a": 5000, "b": 5000}, {"a": 6000, "b": 4000}))

# %% [markdown]
# Power: at 100K rows per side a shift from 5.0% to 5.5% is detected almost
# always, while a relative 1% shift (5.0% to 5.05%) is not.

# %%
print(two_proportion_power(0.05, 0.055, 100_000, 100_000))
print(two_proportion_power(0.05, 0.0505, 100_000, 100_000))
