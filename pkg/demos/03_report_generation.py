"""Turn findings into a structured report and check it with three verifiers.

Everything here runs offline: the writer is a deterministic template and the
three verifiers are keyword readers. Swapping in real providers only means
configuring ``llm.generator`` and ``llm.verifiers`` in the YAML config.

Run with ``python demos/03_report_generation.py``.
"""
# %%
from hybrid_eeg.pipeline import analyze_recording
from hybrid_eeg.reportgen import build_prompt, majority, mock_clients
from hybrid_eeg.synthetic import synthetic_recording

gen, verifiers = mock_clients()
res = analyze_recording(synthetic_recording("focal_left_temporal", seed=2), recording_id="demo",
                        generator=gen, verifiers=verifiers)

# %% [markdown]
# The only thing the writer sees is this eight-key JSON object, embedded in
# a few-shot prompt.

# %%
print(res.report_features.to_json())
prompt = build_prompt(res.report_features)
print(f"\nprompt: {len(prompt)} characters, {prompt.count('===') // 2} section markers")

# %%
print("\n" + res.report.text)

# %% [markdown]
# Each verifier answers ``[gbs, focal]``. A label is accepted when at least two
# verifiers agree and outvote the alternative; otherwise it stays unresolved.

# %%
v = res.verification
print("votes:", v.votes, "-> majority", v.majority, "unresolved", v.unresolved)
print("two of three:", majority([(1, 0), (1, 1), (0, 1)]))
print("split with an abstention:", majority([(1, 1), (0, 1), None]))
