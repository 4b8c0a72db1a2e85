from .embed import CueEmbeddings, EmbeddingProvider, MissingEmbeddingError
from .formats import ParseError, load_annotations, load_cues, save_annotations, save_cues
from .records import Cue, Dataset, Entity, FrameAnnotation, FrameCues, Relation
from .synthetic import GenerationError, SyntheticConfig, generate_synthetic
from .vocab import GROUPS, Vocabulary, VocabularyError, action_genome_vocabulary, desk_vocabulary
