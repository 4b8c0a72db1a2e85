import pytest

from stsgg.data.embed import EmbeddingProvider
from stsgg.data.synthetic import SyntheticConfig, generate_synthetic
from stsgg.model import ModelConfig, SceneGraphModel, frame_input


@pytest.fixture(scope="session")
def tiny_data():
    return generate_synthetic(SyntheticConfig(seed=3, frames=6, frames_per_video=3, grid_size=3))


def tiny_model(ds, seed=0, **kw):
    cfg = dict(num_queries=4, d_model=8, d_embed=8, layers=1, heads=2, grid_size=ds.grid_size,
               num_objects=ds.vocab.num_objects, group_sizes=ds.vocab.group_sizes)
    cfg.update(kw)
    return SceneGraphModel(ModelConfig(**cfg), ds.features.shape[2], seed)


def tiny_inputs(ds, model, indices, seed=0):
    prov = EmbeddingProvider(model.cfg.d_embed, seed)
    return [frame_input(ds.features[i], ds.cues[i], prov, model.cfg.num_queries) for i in indices]


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
