r"""
Command-line entry point.

    triggerxai explain IMAGE [--mask MASK]
    triggerxai label INPUT [INPUT ...]
    triggerxai evaluate MANIFEST.json
    triggerxai detect-decode RAW.{csv,json}

Common flags: --config PATH, --seed N, --out DIR, --backend NAME, -v/-vv.
Exit codes: 0 success, 2 input error, 3 config error, 4 invariant violation.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .backends import BACKEND_KINDS, build_backend, resolve_backends
from .config import RunConfig, resolve_config
from .detection import decode_box, load_raw_predictions, nms
from .errors import ConfigError, InputError, InvariantError
from .evaluation import (
    brier,
    mean_iou,
    perturbation_curve,
    pointing_game,
    surrogate_fit,
    validate_explanation,
)
from .imageio import read_image, read_mask, write_labels_csv, write_ppm
from .labeling import label_image
from .micronet import MicroNetSpec
from .numeric import ThresholdRule, as_grid, as_prob_vector, binarize, iou_binary
from .pipeline import explain
from .report import write_report
from .scan import collect_images, expand_inputs


__all__ = ['EXIT_OK', 'EXIT_INPUT', 'EXIT_CONFIG', 'EXIT_INVARIANT', 'build_parser', 'main']


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_INVARIANT = 4


def _write_json(path: Path, payload: Any):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(payload, indent=2, allow_nan=False))
        f.write('\n')


def _read_image_or_fail(path: str) -> np.ndarray:
    if not os.path.isfile(path):
        raise InputError(f'no such file: {path}')
    img = read_image(path)
    if img is None:
        raise InputError(f'cannot decode image {path}')
    return img


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_explain(args, config: RunConfig) -> int:
    image = _read_image_or_fail(args.image)
    mask = read_mask(args.mask) if args.mask else None
    res = explain(image, config, mask=mask, image_id=args.image)
    out = _out_dir(args)
    stem = Path(args.image).stem
    for key, overlay in res.overlays.items():
        write_ppm(out / f'{stem}_{key}.ppm', overlay)
    write_report(res.report, out / f'{stem}_report.json')
    logger.info(f'{args.image}: {len(res.overlays)} overlays, gates passed={res.report.gates.passed}')
    return EXIT_OK


def cmd_label(args, config: RunConfig) -> int:
    paths = expand_inputs(args.inputs)
    images = collect_images(paths, verbose=args.verbose > 0)
    if not images:
        raise InputError('no readable image among the inputs')
    records = [label_image(img, path, config.labeler) for path, img in images.items()]
    out = _out_dir(args)
    write_labels_csv(records, out / 'labels.csv')
    logger.info(f'Labeled {len(records)} images')
    return EXIT_OK


def _load_manifest(path: str) -> List[Dict[str, Any]]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            items = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f'cannot read manifest {path}: {e}')
    if not isinstance(items, list) or not items:
        raise InputError('manifest should be a non-empty list of entries')
    base = Path(path).parent
    for i, item in enumerate(items):
        if not isinstance(item, dict) or not all(k in item for k in ('image', 'map', 'mask')):
            raise InputError(f'manifest entry {i} should give image, map and mask')
        for k in ('image', 'map', 'mask'):
            item[k] = str(base / item[k])
    return items


def cmd_evaluate(args, config: RunConfig) -> int:
    r"""
    Manifest entries: {"image", "map", "mask", optional "probs", optional "gold"}.
    Maps are grayscale images read as their channel mean.
    """
    items = _load_manifest(args.manifest)
    spec = MicroNetSpec(channels=config.model.channels, num_classes=config.model.num_classes)
    model = build_backend(resolve_backends(config.model.backend)[0], config.model.seed, spec, config.model.weights)
    rule = ThresholdRule(fraction=config.binarize.fraction)

    maps, masks, probs, golds, rows = [], [], [], [], []
    for item in items:
        image = _read_image_or_fail(item['image'])
        grid = as_grid(_read_image_or_fail(item['map']).astype(np.float64).mean(axis=0), 'map')
        mask = read_mask(item['mask'])
        if grid.shape != mask.shape or grid.shape != image.shape[1:]:
            raise InputError(f'{item["map"]}: map {grid.shape}, mask {mask.shape} and image {image.shape[1:]} differ')
        p = as_prob_vector(item['probs']) if 'probs' in item else model.forward(image).probs
        gold = int(item.get('gold', int(np.argmax(p))))
        _, del_auc = perturbation_curve(model, image, gold, grid, 'deletion', config.evaluate.step)
        _, ins_auc = perturbation_curve(model, image, gold, grid, 'insertion', config.evaluate.step)
        fit = surrogate_fit(model, image, gold, grid, config.evaluate.patch, config.model.seed)
        iou = iou_binary(binarize(grid, rule), mask)
        b = brier([p], [gold])
        gates = validate_explanation(fit.aic, fit.bic, b, float(np.max(p)), iou, config.gates)
        maps.append(grid)
        masks.append(mask)
        probs.append(p)
        golds.append(gold)
        rows.append({
            'image': item['image'],
            'deletion_auc': del_auc,
            'insertion_auc': ins_auc,
            'brier': b,
            'aic': fit.aic,
            'bic': fit.bic,
            'iou': iou,
            'gates': gates.dict(),
        })
    payload = {
        'pointing_game': pointing_game(maps, masks),
        'mean_iou': mean_iou(maps, masks, rule),
        'brier': brier(probs, golds),
        'items': rows,
    }
    _write_json(_out_dir(args) / 'metrics.json', payload)
    return EXIT_OK


def cmd_detect_decode(args, config: RunConfig) -> int:
    raws = load_raw_predictions(args.raw)
    boxes = nms([decode_box(r) for r in raws], config.detect.iou)
    payload = [b._asdict() for b in boxes]
    _write_json(_out_dir(args) / f'{Path(args.raw).stem}_boxes.json', payload)
    logger.info(f'{len(raws)} raw predictions -> {len(boxes)} boxes')
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='config file (default: $TRIGGER_XAI_CONFIG)')
    common.add_argument('--seed', type=int, default=None)
    common.add_argument('--out', default='.', help='output directory')
    common.add_argument('--backend', choices=BACKEND_KINDS + ['all'], default=None)
    common.add_argument('-v', '--verbose', action='count', default=0)

    parser = argparse.ArgumentParser(prog='triggerxai', description='Saliency explanations with trigger-gated validation.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('explain', parents=[common], help='explain one image')
    p.add_argument('image')
    p.add_argument('--mask', default=None, help='ground-truth symptom mask for the IoU gate')
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser('label', parents=[common], help='weak-label images into labels.csv')
    p.add_argument('inputs', nargs='+', help='image files or directories')
    p.set_defaults(func=cmd_label)

    p = sub.add_parser('evaluate', parents=[common], help='score saliency maps against masks')
    p.add_argument('manifest')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('detect-decode', parents=[common], help='decode and suppress raw box predictions')
    p.add_argument('raw')
    p.set_defaults(func=cmd_detect_decode)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    try:
        overrides = {'model.seed': args.seed, 'rise.seed': args.seed, 'model.backend': args.backend}
        config = resolve_config(args.config, overrides)
        return args.func(args, config)
    except ConfigError as e:
        print(f'config error: {e}', file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as e:
        print(f'internal error: {e}', file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, OSError, ValueError) as e:
        print(f'input error: {e}', file=sys.stderr)
        return EXIT_INPUT
