from topics.corpus import preprocess, read_corpus, save_dataset, save_vocabulary

from ._base import ConfigCommand


class Command(ConfigCommand):
    help = "Tokenize a corpus and write vocab.tsv and bow.tsv to the output directory."
    section = "preprocess"

    def execute_run(self, run_config):
        documents = read_corpus(run_config["corpus"])
        vocab, dataset, dropped = preprocess(documents, run_config.form.config)
        out = run_config.path("output_dir")
        out.mkdir(parents=True, exist_ok=True)
        save_vocabulary(out / "vocab.tsv", vocab)
        save_dataset(out / "bow.tsv", dataset)
        self.success(
            f"Kept {len(dataset)} of {len(documents)} documents ({dropped} dropped), "
            f"vocabulary of {len(vocab)} words in {out}"
        )
