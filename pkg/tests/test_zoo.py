#!/usr/bin/env python
"""Tests for the model zoo and work accounting."""

import pytest

from recsim.errors import UnknownModel
from recsim.models import EmbeddingConfig, LayerStack, ModelSpec, OpCategory, Pooling
from recsim.platform import BROADWELL
from recsim.zoo import builtin_model, dominant_category, list_models, sla_target, time_breakdown, work


def tiny_model() -> ModelSpec:
    """Helper: one 4->2 dense layer, one predict layer, no embedding tables."""
    return ModelSpec(
        name="tiny",
        dense_fc=LayerStack(dims=(2,)),
        predict_fc=LayerStack(dims=(1,)),
        embeddings=EmbeddingConfig(num_tables=0, lookups_per_table=0, embedding_dim=8, pooling=Pooling.SUM),
        dense_input_dim=4,
    )


class TestZoo:
    """Test the built-in model registry."""

    def test_list_models(self) -> None:
        """Test the eight archetypes are registered in table order."""
        assert list_models() == ["NCF", "WND", "MT-WND", "DLRM-RMC1", "DLRM-RMC2", "DLRM-RMC3", "DIN", "DIEN"]

    def test_builtin_model(self) -> None:
        """Test a built-in model carries its architecture."""
        rmc1 = builtin_model("DLRM-RMC1")
        assert rmc1.embeddings.num_tables == 10
        assert rmc1.embeddings.lookups_per_table == 80
        assert rmc1.embeddings.pooling is Pooling.SUM
        assert rmc1.dense_fc is not None and rmc1.dense_fc.dims == (256, 128, 32)
        assert builtin_model("MT-WND").num_parallel_predict_stacks == 4
        assert builtin_model("DIEN").recurrent_hidden_dim == 64

    def test_unknown_model(self) -> None:
        """Test unknown names raise UnknownModel listing the zoo."""
        with pytest.raises(UnknownModel, match="DLRM-RMC1"):
            builtin_model("RMC9")

    def test_rnn_pooling_needs_hidden_dim(self) -> None:
        """Test AttentionRNN pooling without a hidden width is rejected."""
        with pytest.raises(ValueError, match="recurrent_hidden_dim"):
            ModelSpec(
                name="bad",
                predict_fc=LayerStack(dims=(8,)),
                embeddings=EmbeddingConfig(
                    num_tables=1, lookups_per_table=4, embedding_dim=32, pooling=Pooling.ATTENTION_RNN
                ),
            )


class TestSlaTargets:
    """Test per-model latency targets."""

    @pytest.mark.parametrize(
        "model,medium",
        [
            ("DLRM-RMC1", 0.1),
            ("DLRM-RMC2", 0.4),
            ("DLRM-RMC3", 0.1),
            ("NCF", 0.005),
            ("WND", 0.025),
            ("MT-WND", 0.025),
            ("DIN", 0.1),
            ("DIEN", 0.035),
        ],
    )
    def test_levels(self, model: str, medium: float) -> None:
        """Test low and high are half and one and a half times medium."""
        assert sla_target(model, "medium") == pytest.approx(medium)
        assert sla_target(model, "low") == pytest.approx(medium * 0.5)
        assert sla_target(model, "high") == pytest.approx(medium * 1.5)

    def test_unknown(self) -> None:
        """Test targets for unknown models and levels fail."""
        with pytest.raises(UnknownModel):
            sla_target("custom", "medium")
        with pytest.raises(ValueError, match="SLA level"):
            sla_target("NCF", "extreme")


class TestWork:
    """Test flop and byte accounting."""

    def test_dense_fc_flops(self) -> None:
        """Test a 4->2 layer at batch 1 costs 2*4*2 flops."""
        assert work(tiny_model(), 1).categories[OpCategory.DENSE_FC].flops == 16

    def test_embedding_bytes(self) -> None:
        """Test RMC1 reads 10 tables x 80 lookups x 32 floats per item."""
        assert work(builtin_model("DLRM-RMC1"), 1).categories[OpCategory.EMBEDDING_LOOKUP].nbytes == 102400

    @pytest.mark.parametrize("name", list_models())
    def test_linear_in_batch(self, name: str) -> None:
        """Test every category scales exactly linearly with batch."""
        model = builtin_model(name)
        one = work(model, 1)
        many = work(model, 7)
        for category, op in one.categories.items():
            assert many.categories[category].flops == 7 * op.flops
            assert many.categories[category].nbytes == 7 * op.nbytes

    def test_parallel_stacks(self) -> None:
        """Test MT-WND runs four copies of the WND predict stack."""
        wnd = work(builtin_model("WND"), 8).categories[OpCategory.PREDICT_FC]
        mt = work(builtin_model("MT-WND"), 8).categories[OpCategory.PREDICT_FC]
        assert mt.flops == 4 * wnd.flops
        assert mt.nbytes == 4 * wnd.nbytes

    def test_category_coverage(self) -> None:
        """Test attention and recurrent work only appear for attention pooling."""
        rmc1 = work(builtin_model("DLRM-RMC1"), 1).categories
        din = work(builtin_model("DIN"), 1).categories
        dien = work(builtin_model("DIEN"), 1).categories
        assert rmc1[OpCategory.ATTENTION].flops == 0
        assert din[OpCategory.ATTENTION].flops > 0
        assert din[OpCategory.RECURRENT].flops == 0
        assert dien[OpCategory.RECURRENT].flops > 0

    def test_dien_recurrent_timesteps(self) -> None:
        """Test DIEN runs one GRU step per behaviour position over all 20 tables' vectors."""
        cats = work(builtin_model("DIEN"), 1).categories
        # 20 steps x 3 gates x 2 x (20*32 + 64) x 64
        assert cats[OpCategory.RECURRENT].flops == 5_406_720
        assert cats[OpCategory.RECURRENT].nbytes == 4 * 20 * 704
        # The final hidden state is what reaches the predict stack.
        assert cats[OpCategory.INTERACTION].nbytes == 4 * 64

    def test_invalid_batch(self) -> None:
        """Test batch must be positive."""
        with pytest.raises(ValueError):
            work(builtin_model("NCF"), 0)


class TestDominance:
    """Test which operator category dominates CPU time."""

    @pytest.mark.parametrize(
        "name,expected",
        [
            ("DLRM-RMC1", OpCategory.EMBEDDING_LOOKUP),
            ("DLRM-RMC2", OpCategory.EMBEDDING_LOOKUP),
            ("DLRM-RMC3", OpCategory.DENSE_FC),
            ("NCF", OpCategory.PREDICT_FC),
            ("WND", OpCategory.PREDICT_FC),
            ("MT-WND", OpCategory.PREDICT_FC),
            ("DIEN", OpCategory.RECURRENT),
        ],
    )
    def test_broadwell_batch_64(self, name: str, expected: OpCategory) -> None:
        """Test the dominant category at batch 64 on a fully busy Broadwell."""
        assert dominant_category(builtin_model(name), BROADWELL, 64) is expected

    def test_din_is_memory_bound(self) -> None:
        """Test DIN is dominated by its embedding reads or attention."""
        assert dominant_category(builtin_model("DIN"), BROADWELL, 64) in (
            OpCategory.EMBEDDING_LOOKUP,
            OpCategory.ATTENTION,
        )

    def test_breakdown_covers_categories(self) -> None:
        """Test the time breakdown has one entry per category."""
        breakdown = time_breakdown(builtin_model("NCF"), BROADWELL, 16, active_cores=1)
        assert set(breakdown) == set(OpCategory)
        assert all(t >= 0 for t in breakdown.values())
