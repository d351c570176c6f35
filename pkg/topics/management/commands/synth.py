import json
from pathlib import Path

from topics.corpus import synthetic_corpus, write_corpus

from ._base import ConfigCommand


class Command(ConfigCommand):
    help = "Write a synthetic planted-topic corpus (label<TAB>text lines) and its planted word sets."
    section = "synth"

    def execute_run(self, run_config):
        spec = run_config.form.spec
        corpus = synthetic_corpus(spec, run_config["seed"])
        output = run_config.path("output")
        planted = run_config.path("planted") or output.with_name(output.stem + ".planted.json")
        output.parent.mkdir(parents=True, exist_ok=True)
        write_corpus(output, corpus.documents)
        with open(planted, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"topics": corpus.topic_words, "shared": corpus.shared_words}, fh, indent=2)
            fh.write("\n")
        self.success(f"Wrote {len(corpus.documents)} documents to {output} (planted words: {planted})")
