from django.core.management.base import CommandError

from tigan_models.models import CheckpointRecord, TrainingRun
from topics.corpus import load_dataset, load_vocabulary, vocabulary_hash
from topics.embeddings import load_embeddings
from topics.exceptions import TiganError
from topics.tigan import train

from ._base import ConfigCommand, registry_write


class Command(ConfigCommand):
    help = "Train the topic GAN; writes per-epoch checkpoints, final.ckpt and losses.jsonl."
    section = "train"

    def execute_run(self, run_config):
        config = run_config.form.config
        vocab = load_vocabulary(run_config["vocab"])
        dataset = load_dataset(run_config["bow"])
        embeddings = None
        if run_config["embeddings"]:
            embeddings = load_embeddings(run_config["embeddings"], vocab, seed=config.seed)
        out = run_config.path("output_dir")

        run = registry_write(
            TrainingRun.objects.create,
            seed=config.seed,
            config=run_config.echo(),
            vocab_hash=vocabulary_hash(vocab),
            output_dir=str(out),
        )
        try:
            result = train(config, dataset, vocab, embeddings, output_dir=out)
        except TiganError as exc:
            if run is not None:
                run.status, run.error = TrainingRun.FAILED, str(exc)
                registry_write(run.save)
            raise CommandError(f"training failed: {exc}") from exc

        final = result.checkpoints[-1]
        if run is not None:
            for path, (epoch, step) in zip(result.checkpoints, result.marks):
                registry_write(CheckpointRecord.objects.create, run=run, epoch=epoch, step=step, path=str(path))
            run.status, run.steps, run.final_checkpoint = TrainingRun.FINISHED, result.state.step, str(final)
            registry_write(run.save)
        self.success(f"Trained {result.state.step} steps over {result.state.epoch} epochs; final checkpoint {final}")
