import json
import warnings

import pytest
import torch

warnings.filterwarnings("ignore", module="transformers")


def build_tiny_bert(target_dir):
    """Random-weight BERT encoder with a character-level WordPiece vocab,
    saved to disk so extraction loads it through the standard local path."""
    from transformers import BertConfig, BertModel, BertTokenizerFast

    target_dir.mkdir(parents=True, exist_ok=True)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += [chr(c) for c in range(32, 127)]
    vocab += ["##" + chr(c) for c in range(33, 127)]
    vocab_file = target_dir / "vocab.txt"
    vocab_file.write_text("\n".join(vocab), encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=False)
    tokenizer.save_pretrained(target_dir)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=256,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(target_dir)
    return target_dir


def build_tiny_gpt2(target_dir, training_texts):
    """Random-weight GPT-2 decoder with a byte-level BPE trained on the fly."""
    from tokenizers import ByteLevelBPETokenizer
    from transformers import GPT2Config, GPT2Model, PreTrainedTokenizerFast

    target_dir.mkdir(parents=True, exist_ok=True)
    raw = ByteLevelBPETokenizer()
    raw.train_from_iterator(training_texts, vocab_size=400, min_frequency=1, special_tokens=["<|endoftext|>"])
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=raw._tokenizer,
        pad_token="<|endoftext|>",
        bos_token="<|endoftext|>",
        eos_token="<|endoftext|>",
    )
    tokenizer.save_pretrained(target_dir)
    config = GPT2Config(
        vocab_size=tokenizer.vocab_size,
        n_embd=48,
        n_layer=2,
        n_head=4,
        n_positions=256,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    torch.manual_seed(1)
    GPT2Model(config).save_pretrained(target_dir)
    return target_dir


def build_tiny_t5(target_dir, training_texts):
    """Random-weight T5 encoder-decoder, exercising the encoder-output path."""
    from tokenizers import ByteLevelBPETokenizer
    from transformers import PreTrainedTokenizerFast, T5Config, T5Model

    target_dir.mkdir(parents=True, exist_ok=True)
    raw = ByteLevelBPETokenizer()
    raw.train_from_iterator(training_texts, vocab_size=400, min_frequency=1, special_tokens=["<pad>", "</s>"])
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=raw._tokenizer, pad_token="<pad>", eos_token="</s>"
    )
    tokenizer.save_pretrained(target_dir)
    config = T5Config(
        vocab_size=tokenizer.vocab_size,
        d_model=32,
        num_layers=2,
        num_heads=4,
        d_ff=64,
        d_kv=8,
        decoder_start_token_id=tokenizer.pad_token_id,
        pad_token_id=tokenizer.pad_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    torch.manual_seed(2)
    T5Model(config).save_pretrained(target_dir)
    return target_dir


def synth_snippets(count=100, classes=4):
    """Code-like snippets in `classes` syntactic families, labels by family."""
    templates = [
        "def fn_{i}(x):\n    return x + {i}",
        "for i in range({i}):\n    print(i * {i})",
        "class Thing{i}:\n    value = {i}",
        "while count < {i}:\n    count += {i}",
    ]
    snippets, labels = [], []
    for i in range(count):
        family = i % classes
        snippets.append({"id": f"s{i:04d}", "code": templates[family % len(templates)].format(i=i)})
        labels.append({"id": f"s{i:04d}", "label": family})
    return snippets, labels


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    snippets, labels = synth_snippets(count=100, classes=4)
    snippets[7]["code"] = ""  # an empty snippet must still produce a vector
    return {
        "snippets": write_jsonl(root / "snippets.jsonl", snippets),
        "labels": write_jsonl(root / "labels.jsonl", labels),
        "texts": [s["code"] for s in snippets],
    }


@pytest.fixture(scope="session")
def bert_dir(tmp_path_factory):
    return build_tiny_bert(tmp_path_factory.mktemp("models") / "tiny-bert")


@pytest.fixture(scope="session")
def gpt2_dir(tmp_path_factory, corpus):
    return build_tiny_gpt2(tmp_path_factory.mktemp("models") / "tiny-gpt2", corpus["texts"])


@pytest.fixture(scope="session")
def t5_dir(tmp_path_factory, corpus):
    return build_tiny_t5(tmp_path_factory.mktemp("models") / "tiny-t5", corpus["texts"])
