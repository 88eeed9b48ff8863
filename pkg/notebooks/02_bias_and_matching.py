# %% [markdown]
# # Population bias and propensity matching
#
# A treatment window can fail more often simply because its mix of segments
# changed. Here we build such a scenario, detect the shift on the invariant
# columns, then match rows on a random-forest propensity score.

# %%
from kpidiag.bias import bias_check, normalize
from kpidiag.synth import bias_only_spec, generate_scenario, scenario_config
from kpidiag.tabular import DiagnosisConfig
from kpidiag.workflow import compare_metric

spec = bias_only_spec(seed=3)
control, treatment, truth = generate_scenario(spec)
cfg = scenario_config(spec, DiagnosisConfig("fail", ("inv",), ("h",)))
print(truth.kind, control.row_count, treatment.row_count)

# %%
raw = compare_metric(control, treatment, cfg.target_column)
print(f"raw delta {raw.delta:+.4f}, p={raw.test.p_value:.3g}")

# %%
report = bias_check(control, treatment, cfg.invariant_columns,
                    cfg.bias_p_threshold, cfg.bias_deviation_threshold_pct)
for f in report.entries:
    print(f.feature, f"{f.deviation_pct:.2f}%", f"p={f.test.p_value:.3g}", f.biased)

# %%
pair = normalize(control, treatment, report, cfg)
print(pair.summary())

# %% [markdown]
# After matching, the failure rates line up again.

# %%
norm = compare_metric(control.take(pair.control_idx), treatment.take(pair.treatment_idx),
                      cfg.target_column)
print(f"normalized delta {norm.delta:+.4f}, p={norm.test.p_value:.3g}")
