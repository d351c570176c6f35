import json

from tigan_models.models import EvaluationRecord, TrainingRun
from topics.checkpoints import load_checkpoint
from topics.corpus import load_dataset, load_vocabulary
from topics.evaluation import evaluate_model
from topics.exceptions import ConfigError

from ._base import ConfigCommand, registry_write


class Command(ConfigCommand):
    help = "Score a checkpoint: vote accuracy, topical words, NPMI coherence and the disentanglement check."
    section = "eval"

    def execute_run(self, run_config):
        vocab = load_vocabulary(run_config["vocab"])
        dataset = load_dataset(run_config["bow"])
        checkpoint = load_checkpoint(run_config["checkpoint"], vocab)
        planted = None
        if run_config["planted"]:
            try:
                with open(run_config["planted"], encoding="utf-8") as fh:
                    planted = json.load(fh)["topics"]
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"{run_config['planted']}: not a planted word file ({exc})") from exc

        report = evaluate_model(
            checkpoint.model(),
            dataset,
            vocab,
            top_n=run_config["top_n"],
            planted=planted,
            noise_samples=run_config["noise_samples"],
            top_m=run_config["top_m"],
            seed=run_config["seed"],
            config={"model": checkpoint.config.to_dict(), "eval": run_config.echo()},
        )
        output = run_config.path("output")
        output.parent.mkdir(parents=True, exist_ok=True)
        report.save(output)

        run = registry_write(lambda: TrainingRun.objects.filter(final_checkpoint=run_config["checkpoint"]).first())
        registry_write(
            EvaluationRecord.objects.create,
            run=run,
            kind=EvaluationRecord.TIGAN,
            accuracy=report.accuracy,
            coherence=report.coherence,
            report_path=str(output),
        )
        accuracy = "n/a" if report.accuracy is None else f"{report.accuracy:.4f}"
        coherence = "n/a" if report.coherence is None else f"{report.coherence:.4f}"
        self.success(f"accuracy {accuracy}, coherence {coherence}; report written to {output}")
        for k, words in enumerate(report.topical_words):
            self.stdout.write(f"topic {k}: {' '.join(words)}")
