from .patches import DEFAULT_PATCHES, TechniquePatch
from .render import midi_to_hz, render_note, render_performance
from .renderers import BuiltinRenderer, ExternalRenderer, Renderer, RenderJob, external_render
from .corpus import CorpusSpec, ScaleSpec, build_corpus, build_scale_corpus, plan_corpus, plan_scales
