# %% [markdown]
# # End-to-end diagnosis
#
# `diagnose` returns one of NoChange, TypeB, TypeS or InsufficientData. For a
# TypeS regression it ranks hypothesis features by hazard score.

# %%
from kpidiag.synth import systemic_spec, bias_only_spec, null_spec, generate_scenario, scenario_config
from kpidiag.tabular import DiagnosisConfig
from kpidiag.workflow import diagnose, render_report

base = DiagnosisConfig("fail", ("inv",), ("h",))


def run(spec):
    c, t, truth = generate_scenario(spec)
    return diagnose(c, t, scenario_config(spec, base)), truth


# %%
for spec in (null_spec(1), bias_only_spec(1), systemic_spec(1)):
    rep, truth = run(spec)
    print(f"{truth.kind:10s} -> {rep.classification}")

# %% [markdown]
# The systemic scenario injects a failure multiplier on the `injected`
# feature. It should come out on top.

# %%
rep, truth = run(systemic_spec(1))
print(render_report(rep, "markdown"))
