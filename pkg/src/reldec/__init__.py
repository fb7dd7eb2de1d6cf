"""Learned cluster-sequential belief-propagation decoding of LDPC codes."""

__version__ = "0.1.0"

from .campaign import CampaignResult, StopRule, run_campaign
from .channel import (
    LlrDataset,
    SnrGrid,
    generate_dataset,
    llr_from_observation,
    load_dataset,
    noise_variance,
    save_dataset,
    transmit_all_zero,
)
from .clustering import Clustering, make_clusters
from .codes import (
    ParityCheckMatrix,
    TannerGraph,
    build_ab_code,
    dump_alist,
    lift_code,
    load_alist,
    read_alist_file,
    write_alist_file,
)
from .bp import (
    ClusterEngine,
    ClusterOutput,
    M_CLIP,
    MessageState,
    cn_update,
    flood_cluster,
    get_engine,
    hard_decision,
    init_messages,
    syndrome_ok,
    vn_update,
)
from .decoder import (
    DecodeResult,
    FloodingScheduler,
    PolicyScheduler,
    RandomScheduler,
    decode,
)
from .mdp import (
    Hyperparams,
    MdpInstance,
    QTable,
    greedy_policy,
    q_update,
    reward,
    schedule_order,
    select_cluster_epsilon_greedy,
    select_epsilon_greedy,
    td_loss,
)
from .policy import PolicyArtifact, TrainingRun, load_policy, save_policy
from .training import adapt_online, train_am_reldec, train_m_reldec, train_reldec
