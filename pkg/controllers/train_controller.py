"""
Train Controller
Mixed-domain batching, the alternating discriminator / generator step, epoch loop with
checkpoints and exact resume, and evaluation passes with style-distribution reports.
"""
import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from tqdm import tqdm

from errors import DatasetError, ValidationError
from diffcore import functional as F
from diffcore.checkpoint import load_checkpoint
from diffcore.optim import Adam, lr_at
from harmony.charmnet import (CharmNet, classifier_forward, discriminator_forward,
                              generator_forward, save_net)
from harmony.losses import (LossBreakdown, entropy, loss_adv_generator, loss_discriminator,
                            loss_entropy_reduction, loss_reconstruction, loss_style_ce,
                            loss_total_generator, loss_weighted_cls)
from harmony.metrics import EvalRecord, evaluate_pair
from models.sample import to_unit

logger = logging.getLogger(__name__)

DOMAIN_CODE = {'rendered': 0, 'real': 1}
SUBSET_STREAM = 99
CSV_FIELDS = ('sample_id', 'domain', 'mse', 'fmse', 'psnr',
              'entropy_in', 'entropy_out', 'style_out', 'style_match')
CSV_NOTE = '# mse and fmse are means over pixel-channels on the 0-255 scale'


@dataclass
class Batch:
    composite: np.ndarray
    ground_truth: np.ndarray
    mask: np.ndarray
    domain: str
    sample_ids: list
    composite_label: Optional[np.ndarray] = None
    gt_label: Optional[np.ndarray] = None

    def __len__(self):
        return self.composite.shape[0]


def make_batch(samples):
    """Stack samples of one domain into float64 arrays in [0, 1]"""
    if not samples:
        raise ValidationError('empty sub-batch')
    domains = {s.domain for s in samples}
    if len(domains) != 1:
        raise ValidationError(f'sub-batch mixes domains {sorted(domains)}')
    labelled = samples[0].composite_label is not None
    return Batch(
        composite=np.stack([to_unit(s.composite) for s in samples]),
        ground_truth=np.stack([to_unit(s.ground_truth) for s in samples]),
        mask=np.stack([np.asarray(s.mask, dtype=np.float64) for s in samples]),
        domain=samples[0].domain,
        sample_ids=[s.sample_id for s in samples],
        composite_label=np.stack([s.composite_label for s in samples]) if labelled else None,
        gt_label=np.stack([s.gt_label for s in samples]) if labelled else None,
    )


def strategy_model(config):
    """ModelConfig actually built for a strategy; baselines use one fully shared network"""
    if config.strategy == 'charmnet':
        return config.model
    return replace(config.model, l_enc=0, l_dec=0)


class Trainer:
    """A CharmNet with its two Adam optimizers: generator + classifiers, and discriminator"""

    def __init__(self, config, net=None):
        self.config = config
        self.net = net or CharmNet(strategy_model(config), seed=config.seed)
        betas = (config.beta1, config.beta2)
        self.g_params = self.net.store.select(('enc_', 'dec_', 'trunk.', 'cls_in.', 'cls_out.'))
        self.d_params = self.net.store.select(('disc.',))
        self.g_opt = Adam(self.g_params, lr=config.lr, betas=betas)
        self.d_opt = Adam(self.d_params, lr=config.lr, betas=betas)
        self.epoch = 0
        self.step = 0

    # ------------------------------------------------------------ routing

    @property
    def adversarial(self):
        cfg = self.config
        return cfg.strategy == 'charmnet' and cfg.flags.adversarial and cfg.weights.lambda_adv > 0

    @property
    def style_losses(self):
        return self.config.strategy == 'charmnet'

    def active_domains(self, epoch):
        strategy = self.config.strategy
        if strategy in ('real_only', 'upper_bound'):
            return ('real',)
        if strategy == 'two_stage':
            return ('rendered',) if epoch < self.config.epochs // 2 else ('real',)
        return ('rendered', 'real')

    def set_lr(self, epoch):
        cfg = self.config
        lr = lr_at(epoch, cfg.lr, cfg.milestones, cfg.decay_factor)
        self.g_opt.lr = lr
        self.d_opt.lr = lr
        return lr

    # ------------------------------------------------------------ one step

    @staticmethod
    def _collect(params):
        """Gradients of the parameters actually reached by the last backward pass"""
        return {name: p.grad for name, p in params.items() if p.grad is not None}

    def train_step(self, batch_rd, batch_rl, epoch=None):
        """One discriminator update on L_D, then one joint generator + classifier update"""
        epoch = self.epoch if epoch is None else epoch
        domains = self.active_domains(epoch)
        cfg, net, weights, flags = self.config, self.net, self.config.weights, self.config.flags
        if 'rendered' in domains:
            if batch_rd is None or len(batch_rd) == 0:
                raise ValidationError('train_step: empty rendered sub-batch')
            if self.style_losses and flags.style_rd and batch_rd.composite_label is None:
                raise ValidationError('train_step: rendered samples carry no style labels')
        if 'real' in domains and (batch_rl is None or len(batch_rl) == 0):
            raise ValidationError('train_step: empty real sub-batch')

        outputs = {}
        if 'rendered' in domains:
            outputs['rendered'] = generator_forward(net, batch_rd.composite, batch_rd.mask, 'rendered', 'train')
        if 'real' in domains:
            outputs['real'] = generator_forward(net, batch_rl.composite, batch_rl.mask, 'real', 'train')

        # Discriminator step on detached stage-1 features
        l_d = 0.0
        adversarial = self.adversarial and len(outputs) == 2
        if adversarial:
            net.store.zero_grad()
            loss_d = loss_discriminator(discriminator_forward(net, F.detach(outputs['real'].f_in)),
                                        discriminator_forward(net, F.detach(outputs['rendered'].f_in)))
            loss_d.backward()
            self.d_opt.step(self._collect(self.d_params))
            l_d = loss_d.item()

        parts = {name: 0.0 for name in ('rec_rd', 'rec_rl', 'g_rd', 'in_rd', 'out_rd', 'w_rl', 'er_rl', 'sa_rl')}
        if 'rendered' in outputs:
            out = outputs['rendered']
            parts['rec_rd'] = loss_reconstruction(out.harmonized, batch_rd.ground_truth)
            if adversarial:
                parts['g_rd'] = loss_adv_generator(discriminator_forward(net, out.f_in, frozen=True))
            if self.style_losses and flags.style_rd and weights.lambda_sty_rd > 0:
                parts['in_rd'] = loss_style_ce(classifier_forward(net, out.f_in, 'in'), batch_rd.composite_label)
                parts['out_rd'] = loss_style_ce(classifier_forward(net, out.f_out, 'out'), batch_rd.gt_label)
        if 'real' in outputs:
            out = outputs['real']
            parts['rec_rl'] = loss_reconstruction(out.harmonized, batch_rl.ground_truth)
            sa_on = (self.style_losses and weights.lambda_sty_rl > 0 and epoch >= cfg.sa_warmup_epochs
                     and (flags.weighted_cls or flags.entropy_reduction))
            if sa_on:
                # Frozen classifiers: batch statistics, no running-stat updates
                p_in = classifier_forward(net, out.f_in, 'in', frozen=True)
                p_out = classifier_forward(net, out.f_out, 'out', frozen=True)
                if flags.weighted_cls:
                    parts['w_rl'] = loss_weighted_cls(p_in, p_out)
                if flags.entropy_reduction:
                    parts['er_rl'] = loss_entropy_reduction(p_in, p_out, weights.margin)
                parts['sa_rl'] = parts['w_rl'] + parts['er_rl']

        total = loss_total_generator(parts, weights)
        net.store.zero_grad()
        total.backward()
        self.g_opt.step(self._collect(self.g_params))
        self.step += 1
        return LossBreakdown.from_parts(parts, weights, discriminator=l_d)

    # ------------------------------------------------------------ checkpoints

    def save(self, path, extra_meta=None):
        arrays, g_meta = self.g_opt.state('opt.g')
        d_arrays, d_meta = self.d_opt.state('opt.d')
        arrays.update(d_arrays)
        meta = {'epoch': self.epoch, 'step': self.step, 'opt_g': g_meta, 'opt_d': d_meta,
                'train_config': train_config_dict(self.config)}
        meta.update(extra_meta or {})
        save_net(path, self.net, extra_arrays=arrays, meta=meta)

    def restore(self, path):
        arrays, meta = load_checkpoint(path)
        self.net.load_state(arrays)
        self.g_opt.load_state('opt.g', arrays, meta['opt_g'])
        self.d_opt.load_state('opt.d', arrays, meta['opt_d'])
        self.epoch = int(meta['epoch'])
        self.step = int(meta['step'])
        logger.info('resumed from %s at epoch %d, step %d', path, self.epoch, self.step)


def train_config_dict(config):
    return json.loads(json.dumps(asdict(config)))


# ---------------------------------------------------------------- epoch loop

def rendered_subset(samples, fraction, seed):
    """Seeded subset of ceil(fraction * n) samples, in original order"""
    if fraction >= 1.0:
        return list(samples)
    keep = max(1, math.ceil(fraction * len(samples)))
    chosen = np.sort(np.random.default_rng([int(seed), SUBSET_STREAM]).permutation(len(samples))[:keep])
    return [samples[i] for i in chosen]


def epoch_order(n, steps, batch_size, seed, epoch, domain):
    """Per-epoch permutation, cycled until steps * batch_size indices are available"""
    order = np.random.default_rng([int(seed), int(epoch), DOMAIN_CODE[domain]]).permutation(n)
    return np.resize(order, steps * batch_size).reshape(steps, batch_size)


def fit(trainer, train_samples, run_dir, resume=None, progress=True, config_hash=None):
    """Train for the configured epochs, writing runlog.jsonl and checkpoints under run_dir"""
    cfg = trainer.config
    by_domain = {
        'rendered': rendered_subset([s for s in train_samples if s.domain == 'rendered'],
                                    cfg.rendered_fraction, cfg.seed),
        'real': [s for s in train_samples if s.domain == 'real'],
    }
    if resume:
        trainer.restore(resume)
    os.makedirs(run_dir, exist_ok=True)
    runlog_path = os.path.join(run_dir, 'runlog.jsonl')

    with open(runlog_path, 'a') as runlog:
        for epoch in range(trainer.epoch, cfg.epochs):
            domains = trainer.active_domains(epoch)
            for domain in domains:
                if not by_domain[domain]:
                    raise DatasetError(f'no {domain} training samples')
            lr = trainer.set_lr(epoch)
            steps = max(math.ceil(len(by_domain[d]) / cfg.batch_size) for d in domains)
            orders = {d: epoch_order(len(by_domain[d]), steps, cfg.batch_size, cfg.seed, epoch, d)
                      for d in domains}

            started = time.time()
            totals = []
            bar = tqdm(range(steps), desc=f'epoch {epoch + 1}/{cfg.epochs}', leave=False, disable=not progress)
            for s in bar:
                batches = {d: make_batch([by_domain[d][i] for i in orders[d][s]]) for d in domains}
                breakdown = trainer.train_step(batches.get('rendered'), batches.get('real'), epoch)
                runlog.write(breakdown.to_json(event='step', step=trainer.step, epoch=epoch, lr=lr) + '\n')
                totals.append(breakdown.L_G)
                bar.set_postfix(L_G=f'{breakdown.L_G:.4f}')

            trainer.epoch = epoch + 1
            record = {'event': 'epoch', 'epoch': epoch, 'steps': steps, 'lr': lr,
                      'mean_L_G': float(np.mean(totals)), 'seconds': round(time.time() - started, 3),
                      'config_hash': config_hash}
            runlog.write(json.dumps(record, sort_keys=True) + '\n')
            runlog.flush()
            logger.info('epoch %d/%d mean L_G %.5f', epoch + 1, cfg.epochs, record['mean_L_G'])

            if trainer.epoch % cfg.checkpoint_every == 0 or trainer.epoch == cfg.epochs:
                trainer.save(os.path.join(run_dir, f'epoch_{trainer.epoch:04d}.ckpt'),
                             {'config_hash': config_hash})
    final = os.path.join(run_dir, 'final.ckpt')
    trainer.save(final, {'config_hash': config_hash})
    return final


# ---------------------------------------------------------------- evaluation

def _style_match(sample, style_out, oracle):
    if sample.gt_label is not None:
        return float(style_out == int(np.argmax(sample.gt_label)))
    if oracle is not None and sample.scene_id in oracle:
        background_view = sample.pair[1]
        return float(style_out == int(oracle[sample.scene_id][background_view]))
    return float('nan')


def evaluate(net, samples, oracle=None, identity=False, parity=False, batch_size=16):
    """Per-sample EvalRecords in ascending sample_id order plus per-domain aggregates.

    With `identity` the composite itself is scored (the Input-Composite baseline) and no
    network is needed.
    """
    if not samples:
        raise DatasetError('nothing to evaluate')
    if net is None and not identity:
        raise ValidationError('evaluate needs a network unless scoring the identity harmonizer')
    ordered = sorted(samples, key=lambda s: s.sample_id)
    records = []
    for domain in ('rendered', 'real'):
        subset = [s for s in ordered if s.domain == domain]
        for start in range(0, len(subset), batch_size):
            chunk = subset[start:start + batch_size]
            batch = make_batch(chunk)
            if identity:
                harmonized = batch.composite
                p_in = p_out = None
            else:
                out = generator_forward(net, batch.composite, batch.mask, domain, 'eval')
                harmonized = out.harmonized.data
                p_in = classifier_forward(net, out.f_in, 'in', mode='eval')
                p_out = classifier_forward(net, out.f_out, 'out', mode='eval')
                h_in, h_out = entropy(p_in).data, entropy(p_out).data
            for n, sample in enumerate(chunk):
                record = evaluate_pair(sample.sample_id, domain, harmonized[n], batch.ground_truth[n],
                                       batch.mask[n], parity=parity)
                if p_out is not None:
                    record.entropy_in = float(h_in[n])
                    record.entropy_out = float(h_out[n])
                    record.style_out = int(np.argmax(p_out.data[n]))
                    record.style_match = _style_match(sample, record.style_out, oracle)
                records.append(record)
    records.sort(key=lambda r: r.sample_id)
    return records, aggregate(records)


def aggregate(records):
    """Means per domain and overall, reduced in ascending sample_id order"""
    result = {}
    groups = {'all': records}
    for domain in ('rendered', 'real'):
        subset = [r for r in records if r.domain == domain]
        if subset:
            groups[domain] = subset
    for name, subset in groups.items():
        subset = sorted(subset, key=lambda r: r.sample_id)
        row = {'count': len(subset)}
        for field_name in ('mse', 'fmse', 'psnr', 'entropy_in', 'entropy_out', 'style_match'):
            values = np.array([getattr(r, field_name) for r in subset], dtype=np.float64)
            finite = values[~np.isnan(values)]
            row[field_name] = float(np.mean(finite)) if finite.size else float('nan')
        result[name] = row
    return result


def write_eval_csv(records, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='') as fh:
        fh.write(CSV_NOTE + '\n')
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow({name: repr(v) if isinstance(v, float) else v
                             for name, v in asdict(record).items()})


def read_eval_csv(path):
    if not os.path.isfile(path):
        raise DatasetError(f'no evaluation report at {path}')
    with open(path, newline='') as fh:
        rows = [line for line in fh if not line.startswith('#')]
    records = []
    for row in csv.DictReader(rows):
        records.append(EvalRecord(
            sample_id=row['sample_id'], domain=row['domain'], mse=float(row['mse']),
            fmse=float(row['fmse']), psnr=float(row['psnr']),
            entropy_in=float(row['entropy_in']), entropy_out=float(row['entropy_out']),
            style_out=int(row['style_out']), style_match=float(row['style_match']),
        ))
    return records


# ---------------------------------------------------------------- whole runs

def corpus_root_of(manifest_path):
    """Corpus directory the manifest's ground truths live in: <root>/<family>/scenes/<id>/<view>.png"""
    with open(manifest_path) as fh:
        records = json.load(fh)
    if not records:
        return None
    base = os.path.dirname(os.path.abspath(manifest_path))
    view = os.path.normpath(os.path.join(base, records[0]['gt_path']))
    return os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(view))))


def oracle_for(manifest_path):
    """Sealed style oracle of the corpus the manifest was built from, if it is readable"""
    from controllers.scene_controller import ORACLE_FILE, load_oracle
    root = corpus_root_of(manifest_path) if os.path.isfile(manifest_path) else None
    if root is None or not os.path.isfile(os.path.join(root, ORACLE_FILE)):
        logger.warning('no style oracle found for %s; real-like style_match will be NaN', manifest_path)
        return None
    return load_oracle(root)


def training_samples(config):
    """Training split of the manifest; the upper bound also gets the reserved novel real pairs"""
    from controllers.composite_controller import load_dataset
    samples = load_dataset(config.dataset, split='train')
    if config.strategy == 'upper_bound':
        novel = load_dataset(config.dataset, split='novel', domain='real')
        if not novel:
            raise DatasetError(f'{config.dataset} has no novel real samples; rebuild it with --novel-scenes')
        samples = [s for s in samples if s.domain == 'real'] + novel
    return samples


def run_experiment(experiment, run_dir, progress=True, resume=None, config_hash=None):
    """Train on the manifest's train split, then score the held-out real-like split"""
    from controllers.composite_controller import load_dataset
    cfg = experiment.train
    train_samples = training_samples(cfg)
    test_samples = load_dataset(cfg.dataset, split='test', domain='real')
    if not test_samples:
        raise DatasetError(f'{cfg.dataset} has no held-out real samples')
    size = test_samples[0].composite.shape[1:]
    if size != (cfg.model.height, cfg.model.width):
        raise ValidationError(f'dataset images are {size[0]}x{size[1]} but model.height/width are '
                              f'{cfg.model.height}x{cfg.model.width}')

    trainer = Trainer(cfg)
    checkpoint = fit(trainer, train_samples, run_dir, resume=resume, progress=progress,
                     config_hash=config_hash)
    records, aggregates = evaluate(trainer.net, test_samples, oracle=oracle_for(cfg.dataset))
    write_eval_csv(records, os.path.join(run_dir, 'eval.csv'))
    baseline, baseline_aggregates = evaluate(None, test_samples, identity=True)
    write_eval_csv(baseline, os.path.join(run_dir, 'eval_composite.csv'))
    summary = {'model': aggregates, 'composite': baseline_aggregates, 'checkpoint': checkpoint}
    with open(os.path.join(run_dir, 'summary.json'), 'w') as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
