"""Experiment loops: the hierarchical teacher, the baselines, and the world-model fidelity check."""
from __future__ import annotations

import logging
import os
import time

import numpy as np
from scipy.stats import wasserstein_distance

from . import checkpoint
from .baselines import LevelBuffer, accel_next, accel_score, dr_next, reset_on_episode
from .config import RunConfig
from .envs import core as envcore
from .envs.params import ParamSpace, ParamVector, continuous, mutate_params, sample_params
from .errors import RunAbortedError
from .evalset import EvalSet, build_eval_set, collides, perf_vector
from .runlog import RunLog
from .seeding import derive_seed, stream
from .student import PPOConfig, StudentPolicy, evaluate_policy, train_in_env
from .teacher import (REAL, ReplayBuffer, RewardConfig, TeacherAgent, TeacherTransition, cv,
                      ddpg_update, mix_batch, progress_reward, select_action, teacher_reward)
from .worldmodel import ActionModel, WorldModel, gen_synthetic

log = logging.getLogger(__name__)


def build_sets(config: RunConfig) -> tuple[EvalSet, EvalSet]:
    """Evaluation and test sets; both depend only on their own seeds, so every
    method and master seed of a study sees the same environments."""
    space = envcore.param_space(config.family)
    ev = build_eval_set(space, config.family, config.eval.m, config.eval.mode,
                        np.random.default_rng(config.eval.seed), seed=config.eval.seed)
    te = build_eval_set(space, config.family, config.test.m, config.test.mode,
                        np.random.default_rng(config.test.seed), seed=config.test.seed, exclude=ev.params)
    check_disjoint(ev.params, te.params)
    return ev, te


def check_disjoint(a, b) -> None:
    for pv in a:
        if collides(pv, b):
            raise ValueError(f"environment {pv.values} appears in both evaluation and test sets")


def resolve_training_params(pv: ParamVector, family: str, excluded, rng: np.random.Generator):
    """Keep training environments out of the eval/test sets and away from
    unbuildable level combinations.  Returns (params, redirected_from or None)."""
    if envcore.params_feasible(family, pv) and not collides(pv, excluded):
        return pv, None
    space = pv.space
    if space.all_discrete:
        import itertools
        here = np.array([d.levels.index(v) for d, v in zip(space.dims, pv.values)])
        best, best_d = [], None
        for combo in itertools.product(*[range(len(d.levels)) for d in space.dims]):
            cand = ParamVector(space, tuple(d.levels[i] for d, i in zip(space.dims, combo)))
            if not envcore.params_feasible(family, cand) or collides(cand, excluded):
                continue
            dist = int(np.abs(np.array(combo) - here).sum())
            if best_d is None or dist < best_d:
                best, best_d = [cand], dist
            elif dist == best_d:
                best.append(cand)
        return best[int(rng.integers(len(best)))], list(pv.values)
    for _ in range(1000):
        cand = mutate_params(pv, rng, 0.01)
        if envcore.params_feasible(family, cand) and not collides(cand, excluded):
            return cand, list(pv.values)
    return sample_params(space, rng), list(pv.values)


def test_returns(policy, test_set: EvalSet, episodes: int, deterministic: bool = True) -> list:
    return [evaluate_policy(policy, pv, test_set.family, episodes, seed=es, env_seed=es,
                            deterministic=deterministic)
            for pv, es in test_set]


def make_student(config: RunConfig, episode: int) -> StudentPolicy:
    sc = config.student
    return StudentPolicy.for_family(config.family, stream(config.seed, "student-init", episode),
                                    hidden=tuple(sc.hidden), gamma=sc.gamma, gae_lambda=sc.gae_lambda,
                                    lr=sc.lr, max_grad_norm=sc.max_grad_norm)


def ppo_config(config: RunConfig) -> PPOConfig:
    sc = config.student
    return PPOConfig(epochs=sc.epochs, minibatches=sc.minibatches, clip_ratio=sc.clip_ratio,
                     ent_coef=sc.ent_coef, vf_coef=sc.vf_coef, lr=sc.lr, max_grad_norm=sc.max_grad_norm)


STATE_SCALE = {"maze": 1.0, "lander": 0.01}


class Run:
    """State of one experiment; ``execute`` drives it to completion."""

    def __init__(self, config: RunConfig, out_dir: str | None = None, eval_set: EvalSet | None = None,
                 test_set: EvalSet | None = None):
        self.config = config.validate()
        self.out_dir = out_dir
        self.space: ParamSpace = envcore.param_space(config.family)
        if eval_set is None or test_set is None:
            eval_set, test_set = build_sets(config)
        check_disjoint(eval_set.params, test_set.params)
        self.eval_set, self.test_set = eval_set, test_set
        self.excluded = list(eval_set.params) + list(test_set.params)
        self.ppo = ppo_config(config)
        self.reward_cfg = RewardConfig(config.reward.eta, config.reward.eps_cv)
        self.kind = config.teacher
        self.hierarchical = self.kind in ("shed", "h-mdp")
        self.use_world_model = self.kind == "shed"
        tc, dc = config.teacher_agent, config.diffusion
        self.agent = self.world_model = self.action_model = self.levels = None
        self.b_real = self.b_syn = None
        if self.hierarchical:
            self.agent = TeacherAgent(len(eval_set), self.space, stream(config.seed, "teacher-init"),
                                      hidden=tuple(tc.hidden), actor_lr=tc.actor_lr, critic_lr=tc.critic_lr,
                                      tau=tc.tau, gamma=tc.gamma, noise_start=tc.noise_start,
                                      noise_end=tc.noise_end,
                                      noise_decay_steps=config.episodes * config.env_budget,
                                      state_scale=STATE_SCALE[config.family])
            self.b_real = ReplayBuffer(tc.real_capacity)
            self.b_syn = ReplayBuffer(tc.synthetic_capacity)
        if self.use_world_model:
            self.world_model = WorldModel(len(eval_set), self.space, stream(config.seed, "diffusion-init"),
                                          K=dc.K, beta_min=dc.beta_min, beta_max=dc.beta_max,
                                          hidden=tuple(dc.hidden), lr=dc.lr)
            if dc.action_source == "action_diffusion":
                self.action_model = ActionModel(len(eval_set), self.space, stream(config.seed, "action-init"),
                                                K=dc.K, beta_min=dc.beta_min, beta_max=dc.beta_max,
                                                hidden=tuple(dc.hidden), lr=dc.lr)
        if self.kind in ("accel", "accel-edit"):
            ac = config.accel
            self.levels = LevelBuffer(ac.capacity, ac.replay_prob, ac.temperature)
        self.log = RunLog({"config": config.to_dict(), "config_hash": config.hash(),
                           "eval_set": eval_set.to_record(), "test_set": test_set.to_record()})
        self.student_updates = 0
        self.envs_generated = 0

    # -- one teacher decision ------------------------------------------------
    def propose(self, ep: int, t: int, s):
        rng = stream(self.config.seed, "teacher", ep, t)
        if self.hierarchical:
            return select_action(self.agent, s, explore=True, rng=rng), {"kind": "teacher"}
        if self.kind == "dr":
            return dr_next(self.space, rng), {"kind": "fresh"}
        return accel_next(self.levels, self.space, rng, self.config.accel.edit_strength)

    def perf(self, student, ep: int, t: int) -> np.ndarray:
        return perf_vector(student, self.eval_set, self.config.eval.episodes_per_env,
                           seed=derive_seed(self.config.seed, "eval", 0) % (2**31),
                           deterministic=self.config.eval.deterministic)

    def test(self, student, ep: int, t: int) -> None:
        rets = test_returns(student, self.test_set, self.config.test.episodes_per_env,
                            self.config.test.deterministic)
        self.log.emit("test-eval", episode=ep, step=t, returns=rets, mean=float(np.mean(rets)))

    def teacher_learn(self, ep: int, t: int) -> None:
        cfg = self.config
        dc, tc = cfg.diffusion, cfg.teacher_agent
        n_syn = 0
        if self.use_world_model and len(self.b_real) >= dc.gate:
            rng = stream(cfg.seed, "diffusion", ep, t)
            wm_loss = self.world_model.train_on_buffer(self.b_real, dc.train_steps, dc.batch_size, rng)
            if self.action_model is not None:
                items = list(self.b_real.items)
                self.action_model.train(np.array([x.state for x in items]),
                                        np.array([x.action_code for x in items]),
                                        dc.train_steps, dc.batch_size, rng)
            synth = gen_synthetic(self.world_model, self.b_real, self.reward_cfg, dc.synthetic_per_step, rng,
                                  dc.action_source, self.action_model)
            for tr in synth:
                self.b_syn.push(tr)
            n_syn = len(synth)
            self.log.emit("synthetic", episode=ep, step=t, count=n_syn, world_model_loss=wm_loss,
                          buffer=len(self.b_syn))
        # until the world model has produced data the batch is drawn from real experience only
        psi = cfg.psi if self.use_world_model and len(self.b_syn) else 1.0
        rng = stream(cfg.seed, "teacher-update", ep, t)
        losses = []
        for _ in range(tc.updates_per_step):
            batch = mix_batch(self.b_real, self.b_syn if psi < 1.0 else None, psi,
                              tc.batch_size, rng)
            losses.append(ddpg_update(self.agent, batch, tc.gamma, tc.tau, rng))
        self.log.emit("teacher-update", episode=ep, step=t, updates=len(losses), psi=psi,
                      critic_loss=float(np.mean([x["critic_loss"] for x in losses])),
                      actor_loss=float(np.mean([x["actor_loss"] for x in losses])))

    # -- main loop -----------------------------------------------------------
    def execute(self) -> RunLog:
        cfg = self.config
        t0 = time.time()
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
            self.log.open(os.path.join(self.out_dir, "runlog.jsonl"))
        try:
            self.log.emit("run-start", teacher=self.kind, family=cfg.family, seed=cfg.seed,
                          episodes=cfg.episodes, env_budget=cfg.env_budget)
            student = None
            for ep in range(cfg.episodes):
                student = self.episode(ep)
            self.log.emit("run-end", envs_generated=self.envs_generated, student_updates=self.student_updates,
                          wall_seconds=time.time() - t0)
            if self.out_dir:
                self.save_checkpoints(student)
        except Exception as exc:
            idx = len(self.log.events)
            self.log.emit("run-aborted", error=repr(exc))
            raise RunAbortedError(idx, exc) from exc
        finally:
            self.log.close()
        return self.log

    def episode(self, ep: int):
        cfg = self.config
        student = make_student(cfg, ep)
        reset_on_episode(self.levels, self.kind)
        self.log.emit("episode-start", episode=ep,
                      level_buffer=len(self.levels) if self.levels is not None else None)
        s = None
        if self.hierarchical:
            s = self.perf(student, ep, -1)
            self.log.emit("perf-vector", episode=ep, step=-1, values=s)
        self.test(student, ep, 0)
        for t in range(cfg.env_budget):
            pv, prov = self.propose(ep, t, s)
            pv, redirected = resolve_training_params(pv, cfg.family, self.excluded,
                                                     stream(cfg.seed, "resolve", ep, t))
            if collides(pv, self.excluded):
                raise AssertionError("training environment collides with evaluation/test sets")
            env_seed = derive_seed(cfg.seed, "env-instance", ep, t) % (2**31)
            env = envcore.make_env(cfg.family, pv, env_seed)
            self.envs_generated += 1
            self.log.emit("env-generated", episode=ep, step=t, params=list(pv.values), teacher=self.kind,
                          provenance=prov, redirected_from=redirected, env_seed=env_seed)
            summary = train_in_env(student, env, cfg.student.steps_per_env, self.ppo,
                                   stream(cfg.seed, "student", ep, t))
            self.student_updates += summary["updates"]
            self.log.emit("student-trained", episode=ep, step=t, updates=summary["updates"],
                          env_steps=summary["steps"], episodes_finished=len(summary["episode_returns"]),
                          mean_return=summary["mean_return"], policy_loss=summary["policy_loss"],
                          value_loss=summary["value_loss"], entropy=summary["entropy"])
            if self.levels is not None:
                score = accel_score(summary["returns"], summary["batch"].values)
                self.levels.add(pv, score, ep)
                self.log.emit("level-scored", episode=ep, step=t, score=score, buffer=len(self.levels))
            if self.hierarchical:
                s2 = self.perf(student, ep, t)
                r = teacher_reward(s, s2, self.reward_cfg)
                self.log.emit("perf-vector", episode=ep, step=t, values=s2)
                self.log.emit("teacher-reward", episode=ep, step=t, reward=r, progress=progress_reward(s, s2),
                              cv=cv(s, s2, self.reward_cfg.eps_cv))
                self.b_real.push(TeacherTransition(s, pv, r, s2, REAL, done=(t == cfg.env_budget - 1)))
                self.teacher_learn(ep, t)
                s = s2
            if (t + 1) % cfg.test.every == 0 or t == cfg.env_budget - 1:
                self.test(student, ep, t + 1)
        self.log.emit("episode-end", episode=ep)
        return student

    def save_checkpoints(self, student) -> None:
        checkpoint.save_student(os.path.join(self.out_dir, "student.ckpt"), student)
        if self.agent is not None:
            checkpoint.save_teacher(os.path.join(self.out_dir, "teacher.ckpt"), self.agent)
        if self.world_model is not None and self.world_model.norm is not None:
            checkpoint.save_worldmodel(os.path.join(self.out_dir, "worldmodel.ckpt"), self.world_model)


def run_shed(config: RunConfig, out_dir: str | None = None) -> RunLog:
    if config.teacher not in ("shed", "h-mdp"):
        raise ValueError("run_shed expects teacher 'shed' or 'h-mdp'")
    return Run(config, out_dir).execute()


def run_baseline(config: RunConfig, out_dir: str | None = None) -> RunLog:
    if config.teacher not in ("dr", "accel", "accel-edit", "h-mdp"):
        raise ValueError("run_baseline expects teacher dr, accel, accel-edit or h-mdp")
    return Run(config, out_dir).execute()


def run(config: RunConfig, out_dir: str | None = None) -> RunLog:
    return Run(config, out_dir).execute()


# -- world-model fidelity ---------------------------------------------------

class ScriptedDynamics:
    """Stand-in for student learning dynamics: s' = f(s, a) + sigma * N(0, I),
    with f a fixed random tanh network (5 performance dims, 3 action dims)."""

    def __init__(self, seed: int = 0, state_dim: int = 5, action_dim: int = 3):
        rng = np.random.default_rng(seed)
        self.state_dim, self.action_dim = state_dim, action_dim
        self.W = rng.normal(0.0, 1.0, (state_dim + action_dim, state_dim))
        self.b = rng.normal(0.0, 0.3, state_dim)
        self.space = ParamSpace(tuple(continuous(f"a{i + 1}", -1.0, 1.0) for i in range(action_dim)),
                                name="scripted")

    def f(self, s, a):
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=-1)
        return np.atleast_2d(s) + 0.5 * np.tanh(x @ self.W + self.b)

    def sample(self, s, a, sigma, rng):
        mean = self.f(s, a)
        return mean + sigma * rng.standard_normal(mean.shape)


def worldmodel_check(seed: int = 0, sigmas=(0.05, 1.0, 3.0, 10.0), n_train: int = 20000,
                     train_steps: int = 6000, batch_size: int = 512, lr: float = 1e-3, K: int = 5,
                     beta_min: float = 0.1, beta_max: float = 10.0, n_samples: int = 200,
                     w1_tol: float = 0.35, point_tol: float = 0.1) -> dict:
    """Train the world model on scripted transitions and compare generated to oracle next states.

    Noisy regimes compare 200 oracle and 200 generated next states at one
    fixed condition by per-dim Wasserstein-1 (pass if <= w1_tol * sigma).
    The near-deterministic regime compares generated samples with f(s, a)
    over a 5x5 grid of conditions in normalised units (pass if <= point_tol).
    """
    dyn = ScriptedDynamics(seed)
    report = {"seed": seed, "K": K, "regimes": []}
    s_fixed = np.full(dyn.state_dim, 0.5)
    a_fixed = np.array([0.2, -0.3, 0.5])
    for sigma in sigmas:
        rng = stream(seed, "wm-check", int(round(sigma * 1000)))
        s = rng.uniform(0.0, 1.0, (n_train, dyn.state_dim))
        a = rng.uniform(-1.0, 1.0, (n_train, dyn.action_dim))
        s2 = dyn.sample(s, a, sigma, rng)
        wm = WorldModel(dyn.state_dim, dyn.space, stream(seed, "wm-init", int(round(sigma * 1000))),
                        K=K, beta_min=beta_min, beta_max=beta_max, lr=lr)
        # four phases with a stepped-down learning rate
        for phase in range(4):
            wm.model.optimizer.lr = lr * 0.3 ** phase
            loss = wm.train(s, a, s2, train_steps // 4, batch_size, rng)
        entry = {"sigma": sigma, "final_loss": loss}
        if sigma < 0.5:
            errs = []
            for i in range(5):
                for j in range(5):
                    sc = s_fixed.copy()
                    sc[0] = i / 4
                    ac = np.zeros(dyn.action_dim)
                    ac[0] = -1.0 + j / 2
                    gen = wm.sample(np.repeat(sc[None], 10, 0), np.repeat(ac[None], 10, 0), rng)
                    errs.append(float(np.mean(np.abs(wm.norm(gen) - wm.norm(dyn.f(sc, ac))))))
            entry.update(kind="point", mean_abs_error=float(np.mean(errs)), tolerance=point_tol,
                         passed=bool(np.mean(errs) <= point_tol))
        else:
            real = dyn.sample(np.repeat(s_fixed[None], n_samples, 0), np.repeat(a_fixed[None], n_samples, 0),
                              sigma, rng)
            gen = wm.sample(np.repeat(s_fixed[None], n_samples, 0), np.repeat(a_fixed[None], n_samples, 0), rng)
            w1 = [float(wasserstein_distance(real[:, i], gen[:, i])) for i in range(dyn.state_dim)]
            entry.update(kind="distribution", wasserstein=w1, tolerance=w1_tol * sigma,
                         passed=bool(max(w1) <= w1_tol * sigma))
        report["regimes"].append(entry)
    report["passed"] = all(r["passed"] for r in report["regimes"])
    return report


def run_worldmodel_check(config: RunConfig | None = None, seed: int | None = None, **kw) -> dict:
    if seed is None:
        seed = config.seed if config is not None else 0
    if config is not None:
        kw.setdefault("K", config.diffusion.K)
        kw.setdefault("beta_min", config.diffusion.beta_min)
        kw.setdefault("beta_max", config.diffusion.beta_max)
    return worldmodel_check(seed=seed, **kw)
