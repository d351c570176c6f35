from topics.corpus import corpus_tokens, load_vocabulary, read_corpus
from topics.embeddings import load_embeddings, save_embeddings, train_sgns

from ._base import ConfigCommand


class Command(ConfigCommand):
    help = "Train skip-gram embeddings on a corpus, or import a word-vector file, for a vocabulary."
    section = "embed"

    def execute_run(self, run_config):
        form = run_config.form
        vocab = load_vocabulary(run_config["vocab"])
        if run_config["source"]:
            embeddings = load_embeddings(run_config["source"], vocab, seed=run_config["seed"])
            origin = f"imported from {run_config['source']} ({len(embeddings.missing_words)} missing)"
        else:
            streams = corpus_tokens(read_corpus(run_config["corpus"]), vocab, form.preprocess_config())
            embeddings = train_sgns(streams, vocab, form.config)
            origin = f"trained on {len(streams)} documents"
        output = run_config.path("output")
        output.parent.mkdir(parents=True, exist_ok=True)
        save_embeddings(output, embeddings, vocab)
        self.success(f"Wrote {len(embeddings)}x{embeddings.dim} embeddings to {output}, {origin}")
