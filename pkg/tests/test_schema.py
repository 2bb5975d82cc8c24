import numpy as np
import pytest
from hypothesis import given, strategies as st

from a2f.schema import (
    SWEEP_WEIGHTS,
    AttributeSchema,
    AttributeVector,
    SchemaError,
    default_schema,
    labels_to_soft,
    load_schema,
    sweep_vectors,
    texture_projection,
)

TABLE_TEXTURE = (
    "Arched_Eyebrows", "Bags_Under_Eyes", "Bald", "Bangs", "Big_Lips", "Big_Nose",
    "Bushy_Eyebrows", "Chubby", "Male", "Narrow_Eyes", "No_Beard", "Smiling", "Young",
)
TABLE_COLOR = ("Black_Hair", "Blond_Hair", "Brown_Hair", "Gray_Hair", "Pale_Skin", "Rosy_Cheeks")


class TestDefaultSchema:
    def test_nineteen_names_split_13_6(self):
        schema = default_schema()
        assert len(schema) == 19
        assert schema.texture_names == TABLE_TEXTURE
        assert schema.color_names == TABLE_COLOR

    def test_partition_covers_all_indices(self):
        schema = default_schema()
        assert len(schema.texture_indices) + len(schema.color_indices) == len(schema)
        assert not set(schema.texture_indices) & set(schema.color_indices)

    def test_order_is_file_order(self, tmp_path):
        schema = default_schema()
        path = tmp_path / "s.txt"
        schema.save(path)
        assert load_schema(path).names == schema.names


class TestLoadSchema:
    def test_round_trip_lossless(self, tmp_path, tiny_schema):
        path = tmp_path / "tiny.txt"
        tiny_schema.save(path)
        loaded = load_schema(path)
        assert loaded == tiny_schema
        assert loaded.fingerprint() == tiny_schema.fingerprint()

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(SchemaError):
            load_schema(path)

    def test_attribute_in_both_groups_errors(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("Male texture\nMale color\n")
        with pytest.raises(SchemaError):
            load_schema(path)

    def test_duplicate_name_errors(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("Male texture\nMale texture\n")
        with pytest.raises(SchemaError):
            load_schema(path)

    def test_missing_group_errors(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("Male\n")
        with pytest.raises(SchemaError):
            load_schema(path)

    def test_unknown_group_errors(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("Male shape\n")
        with pytest.raises(SchemaError):
            load_schema(path)


class TestAttributeVector:
    def test_length_mismatch(self, tiny_schema):
        with pytest.raises(SchemaError):
            AttributeVector(np.zeros(5), tiny_schema)

    def test_out_of_range(self, tiny_schema):
        with pytest.raises(SchemaError):
            AttributeVector(np.array([1.5, 0, 0, 0, 0, 0]), tiny_schema)

    def test_non_finite(self, tiny_schema):
        with pytest.raises(SchemaError):
            AttributeVector(np.array([np.nan, 0, 0, 0, 0, 0]), tiny_schema)

    def test_dict_round_trip(self, tiny_schema):
        vec = AttributeVector(np.linspace(-1, 1, 6), tiny_schema)
        back = AttributeVector.from_dict(vec.as_dict(), tiny_schema)
        np.testing.assert_array_equal(vec.values, back.values)

    def test_labels_to_soft(self):
        np.testing.assert_array_equal(labels_to_soft(np.array([0, 1])), [-1.0, 1.0])
        np.testing.assert_array_equal(labels_to_soft(np.array([-1, 1])), [-1.0, 1.0])


class TestTextureProjection:
    def test_full_ones_gives_13_ones(self, schema19):
        vec = AttributeVector(np.ones(19), schema19)
        tex = texture_projection(vec)
        assert tex.shape == (13,)
        assert np.all(tex == 1.0)

    def test_all_negative_ones(self, schema19):
        vec = AttributeVector(-np.ones(19), schema19)
        assert np.all(texture_projection(vec) == -1.0)

    def test_no_color_schema_is_identity(self):
        schema = AttributeSchema.from_records([("A", "texture"), ("B", "texture")])
        vec = AttributeVector(np.array([0.5, -0.5]), schema)
        np.testing.assert_array_equal(texture_projection(vec), vec.values)

    def test_order_preserved(self, tiny_schema):
        vec = AttributeVector(np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]), tiny_schema)
        np.testing.assert_array_equal(texture_projection(vec), [0.1, 0.2, 0.3, 0.4])


class TestSweepVectors:
    def test_paper_weight_ladder(self):
        assert SWEEP_WEIGHTS == (-1.0, -0.1, 0.1, 0.4, 0.7, 1.0)

    def test_six_vectors_differ_only_at_index(self, schema19):
        base = AttributeVector(np.zeros(19), schema19)
        male = schema19.index_of("Male")
        vecs = sweep_vectors(base, male)
        assert len(vecs) == 6
        for vec, w in zip(vecs, SWEEP_WEIGHTS):
            assert vec[male] == w
            others = np.delete(vec.values, male)
            np.testing.assert_array_equal(others, np.delete(base.values, male))
        assert np.all(base.values == 0.0)  # base unmodified

    def test_single_weight_equal_to_base(self, tiny_schema):
        base = AttributeVector(np.full(6, 0.4), tiny_schema)
        out = sweep_vectors(base, 2, [0.4])
        assert len(out) == 1
        np.testing.assert_array_equal(out[0].values, base.values)

    def test_empty_weights(self, tiny_schema):
        assert sweep_vectors(AttributeVector.zeros(tiny_schema), 0, []) == []

    def test_bad_weight(self, tiny_schema):
        with pytest.raises(SchemaError):
            sweep_vectors(AttributeVector.zeros(tiny_schema), 0, [2.0])

    def test_bad_index(self, tiny_schema):
        with pytest.raises(SchemaError):
            sweep_vectors(AttributeVector.zeros(tiny_schema), 17, [0.5])

    @given(
        base=st.lists(st.floats(-1, 1), min_size=6, max_size=6),
        index=st.integers(0, 5),
        weight=st.floats(-1, 1),
    )
    def test_property_single_coordinate_change(self, base, index, weight):
        schema = AttributeSchema.from_records(
            [(f"A{i}", "texture") for i in range(4)] + [(f"C{i}", "color") for i in range(2)]
        )
        vec = AttributeVector(np.array(base), schema)
        (out,) = sweep_vectors(vec, index, [weight])
        diff = out.values != vec.values
        assert not diff[np.arange(6) != index].any()
        assert out[index] == weight
