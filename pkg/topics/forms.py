from configparser import ConfigParser
from pathlib import Path

from django import forms

from .baselines import KmeansConfig
from .corpus import BUILTIN_STOPWORDS, PreprocessConfig, SyntheticSpec
from .embeddings import SgnsConfig
from .exceptions import TiganError
from .tigan import CODE_PRIORS, Q_VARIANTS, TiganConfig


class SwitchField(forms.Field):
    """Boolean parsed the way INI files spell it (yes/no, on/off, true/false, 1/0)."""

    def to_python(self, value):
        if isinstance(value, bool):
            return value
        if value in self.empty_values:
            return None
        state = ConfigParser.BOOLEAN_STATES.get(str(value).strip().lower())
        if state is None:
            raise forms.ValidationError(f"'{value}' is not a boolean.")
        return state

    def validate(self, value):
        if value is None and self.required:
            raise forms.ValidationError(self.error_messages["required"], code="required")


class WidthsField(forms.CharField):
    """Comma separated positive layer widths, e.g. ``1000,1000,1000``."""

    def to_python(self, value):
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        text = super().to_python(value)
        if not text:
            return ()
        try:
            widths = tuple(int(part) for part in text.split(","))
        except ValueError:
            raise forms.ValidationError("Enter comma separated integers.")
        if any(w < 1 for w in widths):
            raise forms.ValidationError("Layer widths must be positive.")
        return widths


class ExistingFileField(forms.CharField):
    def validate(self, value):
        super().validate(value)
        if value and not Path(value).is_file():
            raise forms.ValidationError(f"No such file: {value}")


def _dataclass_or_error(form, build):
    try:
        return build()
    except (TiganError, ValueError) as exc:
        form.add_error(None, str(exc))
        return None


class SynthForm(forms.Form):
    output = forms.CharField()
    planted = forms.CharField(required=False)
    topics = forms.IntegerField(min_value=1)
    words_per_topic = forms.IntegerField(min_value=1)
    shared_words = forms.IntegerField(min_value=0)
    docs_per_topic = forms.IntegerField(min_value=1)
    doc_length = forms.IntegerField(min_value=1)
    noise_rate = forms.FloatField()
    seed = forms.IntegerField(min_value=0)

    def clean_noise_rate(self):
        rate = self.cleaned_data["noise_rate"]
        if not 0.0 <= rate < 1.0:
            raise forms.ValidationError("noise_rate must lie in [0, 1).")
        return rate

    def clean(self):
        data = super().clean()
        if not self.errors:
            self.spec = _dataclass_or_error(self, self.to_spec)
        return data

    def to_spec(self) -> SyntheticSpec:
        d = self.cleaned_data
        return SyntheticSpec(
            topics=d["topics"],
            words_per_topic=d["words_per_topic"],
            shared_words=d["shared_words"],
            docs_per_topic=d["docs_per_topic"],
            doc_length=d["doc_length"],
            noise_rate=d["noise_rate"],
        )


class TokenizerFieldsMixin(forms.Form):
    stopwords = forms.CharField(required=False)
    lowercase = SwitchField(required=False)
    min_token_length = forms.IntegerField(min_value=1)

    def clean_stopwords(self):
        source = self.cleaned_data["stopwords"].strip()
        if source and source not in BUILTIN_STOPWORDS and not Path(source).is_file():
            raise forms.ValidationError(
                f"Use one of {sorted(BUILTIN_STOPWORDS)}, a stopword file, or an empty value for none."
            )
        return source

    def preprocess_config(self, vocab_cap: int = PreprocessConfig.vocab_cap) -> PreprocessConfig:
        d = self.cleaned_data
        return PreprocessConfig(
            vocab_cap=vocab_cap,
            stopwords=d["stopwords"],
            lowercase=bool(d["lowercase"]),
            min_token_length=d["min_token_length"],
        )


class PreprocessForm(TokenizerFieldsMixin):
    corpus = ExistingFileField()
    output_dir = forms.CharField()
    vocab_cap = forms.IntegerField(min_value=2)

    def clean(self):
        data = super().clean()
        if not self.errors:
            self.config = _dataclass_or_error(self, lambda: self.preprocess_config(data["vocab_cap"]))
        return data


class EmbedForm(TokenizerFieldsMixin):
    vocab = ExistingFileField()
    output = forms.CharField()
    corpus = ExistingFileField(required=False)
    source = ExistingFileField(required=False)
    dim = forms.IntegerField(min_value=1)
    window = forms.IntegerField(min_value=1)
    negatives = forms.IntegerField(min_value=1)
    epochs = forms.IntegerField(min_value=0)
    lr = forms.FloatField()
    batch_size = forms.IntegerField(min_value=1)
    seed = forms.IntegerField(min_value=0)

    def clean_lr(self):
        lr = self.cleaned_data["lr"]
        if lr <= 0:
            raise forms.ValidationError("lr must be positive.")
        return lr

    def clean(self):
        data = super().clean()
        if bool(data.get("corpus")) == bool(data.get("source")):
            self.add_error(None, "Give either a corpus to train on or a source embedding file to import, not both.")
        if not self.errors:
            self.config = _dataclass_or_error(self, self.to_config)
        return data

    def to_config(self) -> SgnsConfig:
        d = self.cleaned_data
        return SgnsConfig(
            dim=d["dim"],
            window=d["window"],
            negatives=d["negatives"],
            epochs=d["epochs"],
            lr=d["lr"],
            seed=d["seed"],
            batch_size=d["batch_size"],
        )


class TrainForm(forms.Form):
    bow = ExistingFileField()
    vocab = ExistingFileField()
    embeddings = ExistingFileField(required=False)
    output_dir = forms.CharField()
    num_topics = forms.IntegerField(min_value=2)
    z_dim = forms.IntegerField(min_value=1)
    lambda_mi = forms.FloatField(min_value=0)
    alpha_clip = forms.FloatField(min_value=0)
    lambda_gp = forms.FloatField(min_value=0)
    critic_steps = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=2)
    epochs = forms.IntegerField(min_value=0)
    seed = forms.IntegerField(min_value=0)
    q_variant = forms.ChoiceField(choices=[(v, v) for v in Q_VARIANTS])
    finetune_embeddings = SwitchField(required=False)
    autoencoder = SwitchField(required=False)
    code_prior = forms.ChoiceField(choices=[(p, p) for p in CODE_PRIORS])
    g_hidden = WidthsField()
    d_hidden = WidthsField()
    e_hidden = WidthsField()
    embedding_dim = forms.IntegerField(min_value=1)
    lr = forms.FloatField()
    beta1 = forms.FloatField(min_value=0)
    beta2 = forms.FloatField(min_value=0)
    checkpoint_every = forms.IntegerField(min_value=1)

    def clean_lr(self):
        lr = self.cleaned_data["lr"]
        if lr <= 0:
            raise forms.ValidationError("lr must be positive.")
        return lr

    def clean(self):
        data = super().clean()
        for beta in ("beta1", "beta2"):
            if data.get(beta) is not None and data[beta] >= 1:
                self.add_error(beta, "Must be below 1.")
        if data.get("q_variant") == "sif" and not data.get("embeddings"):
            self.add_error("embeddings", "The sif topic classifier needs pretrained embeddings.")
        if not self.errors:
            self.config = _dataclass_or_error(self, self.to_config)
        return data

    def to_config(self) -> TiganConfig:
        d = self.cleaned_data
        fields = TiganConfig.__dataclass_fields__
        values = {name: d[name] for name in fields if name in d}
        values["finetune_embeddings"] = bool(d["finetune_embeddings"])
        values["autoencoder"] = bool(d["autoencoder"])
        return TiganConfig(**values)


class EvalForm(forms.Form):
    checkpoint = ExistingFileField()
    bow = ExistingFileField()
    vocab = ExistingFileField()
    output = forms.CharField()
    planted = ExistingFileField(required=False)
    top_n = forms.IntegerField(min_value=1)
    noise_samples = forms.IntegerField(min_value=0)
    top_m = forms.IntegerField(min_value=1)
    seed = forms.IntegerField(min_value=0)

    def clean_noise_samples(self):
        samples = self.cleaned_data["noise_samples"]
        if samples == 1:
            raise forms.ValidationError("Use 0 to skip the disentanglement check, or at least 2 samples.")
        return samples


class BaselineForm(forms.Form):
    bow = ExistingFileField()
    vocab = ExistingFileField()
    embeddings = ExistingFileField()
    output = forms.CharField(required=False)
    num_topics = forms.IntegerField(min_value=1)
    restarts = forms.IntegerField(min_value=1)
    max_iter = forms.IntegerField(min_value=1)
    tol = forms.FloatField(min_value=0)
    seed = forms.IntegerField(min_value=0)
    use_sif = SwitchField(required=False)

    def clean(self):
        data = super().clean()
        if not self.errors:
            self.config = _dataclass_or_error(self, self.to_config)
        return data

    def to_config(self) -> KmeansConfig:
        d = self.cleaned_data
        return KmeansConfig(
            num_topics=d["num_topics"],
            restarts=d["restarts"],
            max_iter=d["max_iter"],
            tol=d["tol"],
            seed=d["seed"],
            use_sif=bool(d["use_sif"]),
        )


FORMS = {
    "synth": SynthForm,
    "preprocess": PreprocessForm,
    "embed": EmbedForm,
    "train": TrainForm,
    "eval": EvalForm,
    "baseline": BaselineForm,
}
