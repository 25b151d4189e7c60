# coding: utf-8

# # Which feature categories carry the signal?
#
# The synthetic generator can draw labels from a known rule. Here the label
# depends on congestion and rush-hour time slots, so removing the time
# category should hurt and removing weather should not.

# In[1]:

from accrisk.evaluate import AblationSpec, ablate
from accrisk.featurize import featurize_city, negative_sample, temporal_split
from accrisk.ingest import deduplicate
from accrisk.models import TrainConfig, build_model
from accrisk.synth import SynthScenario, generate

s = SynthScenario(seed=1, rows=2, cols=2, weeks=6, rule="traffic+time", noise=0.02,
                  duplicates=50)
city = generate(s)
events, _ = deduplicate(city.events)
entries, regions = featurize_city(events, s.grid, s.start_s, s.n_intervals, city.weather,
                                  city.pois, city.vectors, utc_offset_hours=s.utc_offset)
split = temporal_split(negative_sample(entries, 0.3, 0), train_weeks=4, test_weeks=2)
print(len(split.train), "train /", len(split.test), "test entries")


# A reduced-width model without the region embedding is enough for a rule this
# simple and keeps every configuration under a few seconds.

# In[2]:

def builder(layout, seed):
    return build_model("dap-noembed", layout, len(regions), seed, lstm_hidden=32,
                       branch_dense=32, head_sizes=(64, 32, 16, 2))


tc = TrainConfig(epochs=60, early_stopping_patience=5, batch=256, seeds=(0,))
specs = [AblationSpec("all-but-one", ()),
         AblationSpec("all-but-one", ("time",)),
         AblationSpec("all-but-one", ("weather",)),
         AblationSpec("only-one", ("traffic",)),
         AblationSpec("only-one", ("time",))]
for spec in specs:
    rep = ablate(split, spec, builder, tc)
    print(f"{rep.configuration:<28} accident F1 {rep.accident_f1:.3f}")
