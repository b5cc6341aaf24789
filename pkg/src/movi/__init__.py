"""Training-free multi-object video diffusion guidance at desk scale.

Modules: :mod:`movi.latent` (noise, spectra, filters), :mod:`movi.trajectory`
and :mod:`movi.llm` (LLM-planned box tracks), :mod:`movi.noise` (structured
initial noise), :mod:`movi.attention` (cross-attention re-weighting),
:mod:`movi.sampler` (DDIM and toy backends), :mod:`movi.pipeline` and
:mod:`movi.cli` (end-to-end stages).
"""

__version__ = "0.1.0"
