#!/usr/bin/env python3
"""Convert a Hugging Face BERT checkpoint into the encoder checkpoint layout
read by the transformer backend: config.txt, vocab.txt and weights.bin.

    python3 tools/convert_hf_checkpoint.py bert-base-multilingual-uncased ckpt/multilingual

The classification head is not exported; it is initialized per training run.
"""

import argparse
import struct
import sys
from pathlib import Path

import torch
from transformers import AutoTokenizer, BertModel

LAYER_MAP = {
    "attention.self.query": "attn.query",
    "attention.self.key": "attn.key",
    "attention.self.value": "attn.value",
    "attention.output.dense": "attn.output",
    "intermediate.dense": "ffn.in",
    "output.dense": "ffn.out",
}


def tensor_map(model: BertModel) -> dict[str, torch.Tensor]:
    sd = model.state_dict()
    out = {
        "embeddings.word": sd["embeddings.word_embeddings.weight"],
        "embeddings.position": sd["embeddings.position_embeddings.weight"],
        "embeddings.token_type": sd["embeddings.token_type_embeddings.weight"],
        "embeddings.ln.gamma": sd["embeddings.LayerNorm.weight"],
        "embeddings.ln.beta": sd["embeddings.LayerNorm.bias"],
    }
    for layer in range(model.config.num_hidden_layers):
        src = f"encoder.layer.{layer}."
        dst = f"layer.{layer}."
        for hf, ours in LAYER_MAP.items():
            out[dst + ours + ".weight"] = sd[src + hf + ".weight"]
            out[dst + ours + ".bias"] = sd[src + hf + ".bias"]
        out[dst + "attn.ln.gamma"] = sd[src + "attention.output.LayerNorm.weight"]
        out[dst + "attn.ln.beta"] = sd[src + "attention.output.LayerNorm.bias"]
        out[dst + "ffn.ln.gamma"] = sd[src + "output.LayerNorm.weight"]
        out[dst + "ffn.ln.beta"] = sd[src + "output.LayerNorm.bias"]
    if "pooler.dense.weight" in sd:
        out["pooler.weight"] = sd["pooler.dense.weight"]
        out["pooler.bias"] = sd["pooler.dense.bias"]
    return out


def write_weights(path: Path, tensors: dict[str, torch.Tensor]) -> None:
    with path.open("wb") as f:
        f.write(b"SXW1")
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            t = tensors[name].detach().to(torch.float32).contiguous()
            encoded = name.encode()
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", t.dim()))
            f.write(struct.pack(f"<{t.dim()}I", *t.shape))
            f.write(t.numpy().astype("<f4").tobytes())


def convert(source: str, out: Path, lowercase: bool | None = None) -> None:
    model = BertModel.from_pretrained(source)
    tokenizer = AutoTokenizer.from_pretrained(source)
    cfg = model.config
    if cfg.hidden_act not in ("gelu", "gelu_python"):
        sys.exit(f"unsupported activation {cfg.hidden_act}; the encoder implements exact GELU")
    if lowercase is None:
        lowercase = bool(getattr(tokenizer, "do_lower_case", False))

    vocab = sorted(tokenizer.get_vocab().items(), key=lambda kv: kv[1])
    if [i for _, i in vocab] != list(range(len(vocab))):
        sys.exit("vocabulary ids are not contiguous")

    out.mkdir(parents=True, exist_ok=True)
    config = {
        "vocab_size": cfg.vocab_size,
        "hidden": cfg.hidden_size,
        "layers": cfg.num_hidden_layers,
        "heads": cfg.num_attention_heads,
        "intermediate": cfg.intermediate_size,
        "max_positions": cfg.max_position_embeddings,
        "type_vocab": cfg.type_vocab_size,
        "layer_norm_eps": repr(float(cfg.layer_norm_eps)),
        "lowercase": "true" if lowercase else "false",
    }
    (out / "config.txt").write_text("".join(f"{k} = {v}\n" for k, v in sorted(config.items())))
    (out / "vocab.txt").write_text("".join(token + "\n" for token, _ in vocab), encoding="utf-8")
    write_weights(out / "weights.bin", tensor_map(model))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("source", help="model name or local Hugging Face checkpoint directory")
    parser.add_argument("out", type=Path, help="output checkpoint directory")
    case = parser.add_mutually_exclusive_group()
    case.add_argument("--lowercase", dest="lowercase", action="store_true", default=None)
    case.add_argument("--cased", dest="lowercase", action="store_false")
    args = parser.parse_args()
    convert(args.source, args.out, args.lowercase)


if __name__ == "__main__":
    main()
