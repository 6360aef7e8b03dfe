"""lm_adapter: drives causal LMs and emits the generation, attribution and
score files consumed by the dialrep analytics package."""

__version__ = "0.1.0"

from .modeling import HFCausalLM, LinearBagLM, TinyCausalLM, WordTokenizer
from .prompts import PromptLayout, Span, render_prompt
from .deeplift import RescaleAttributor, attribution_matrix, completeness_gap
from .generate import generate_targets, load_samples
from .attribute import export_attributions
from .score import mauve_generation_groups, perplexities, score_generations
