from tigan_models.models import EvaluationRecord
from topics.baselines import embedding_average_baseline
from topics.corpus import load_dataset, load_vocabulary
from topics.embeddings import SifParams, load_embeddings

from ._base import ConfigCommand, registry_write


class Command(ConfigCommand):
    help = "Embedding-average document vectors clustered with k-means, scored by vote accuracy."
    section = "baseline"

    def execute_run(self, run_config):
        config = run_config.form.config
        vocab = load_vocabulary(run_config["vocab"])
        dataset = load_dataset(run_config["bow"])
        embeddings = load_embeddings(run_config["embeddings"], vocab, seed=config.seed)
        sif = SifParams() if config.use_sif else None
        report = embedding_average_baseline(dataset, embeddings, config, sif=sif, frequencies=vocab.frequencies)
        report.config["baseline_run"] = run_config.echo()

        output = run_config.path("output")
        if output is not None:
            output.parent.mkdir(parents=True, exist_ok=True)
            report.save(output)
            registry_write(
                EvaluationRecord.objects.create,
                kind=EvaluationRecord.BASELINE,
                accuracy=report.accuracy,
                report_path=str(output),
            )
        self.success(f"baseline accuracy {report.accuracy:.4f} over {report.num_documents} documents")
